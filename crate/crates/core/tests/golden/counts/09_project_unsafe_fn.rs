unsafe fn raw_len(s: *const u8) -> usize {
    let mut n = 0;
    while *s.offset(n as isize) != 0 {
        n += 1;
    }
    n
}

fn count(s: &[u8]) -> usize {
    let len = unsafe { raw_len(s.as_ptr()) };
    len
}
