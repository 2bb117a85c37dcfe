fn load(p: *const u32) -> u32 {
    let x = unsafe { *p };
    x
}
