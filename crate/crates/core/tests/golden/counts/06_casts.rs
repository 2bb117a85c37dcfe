fn addr(v: &mut i32) -> usize {
    let p: *mut i32 = v as *mut i32;
    let q = p as usize;
    let r = (v as *mut i32) as *const i32 as usize;
    let n = 5u8 as u32;
    q + r + n as usize
}
