fn alloc_zeroed(n: usize) -> *mut u8 {
    unsafe {
        let p = libc::malloc(n) as *mut u8;
        libc::memset(p as *mut libc::c_void, 0, n);
        p
    }
}
