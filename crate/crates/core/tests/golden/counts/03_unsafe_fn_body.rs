unsafe fn copy_one(dst: *mut u8, src: *const u8) {

    *dst = *src;
    // trailing comment
}
