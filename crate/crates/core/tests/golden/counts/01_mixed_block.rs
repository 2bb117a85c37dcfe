extern "C" {
    fn free(p: *mut u8);
}

fn consume(a: *mut i32, b: *mut i32) -> i32 {
    unsafe {
        let sum = *a + *b;
        *a = 0;
        free(b as *mut u8);
        sum
    }
}
