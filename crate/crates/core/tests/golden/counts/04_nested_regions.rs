unsafe fn outer(p: *mut i32) -> i32 {
    let v = unsafe {
        *p
    };
    v + 1
}
