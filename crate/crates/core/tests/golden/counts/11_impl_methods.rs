struct Buf {
    ptr: *mut u8,
    len: usize,
}

impl Buf {
    unsafe fn get(&self, i: usize) -> u8 {
        *self.ptr.add(i)
    }

    fn first(&self) -> u8 {
        unsafe { self.get(0) }
    }
}
