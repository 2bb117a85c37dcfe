#[no_mangle]
pub unsafe extern "C" fn sum(mut arr: *const i32, n: i32) -> i32 {
    let mut total: i32 = 0;
    let end: *const i32 = arr.offset(n as isize);
    while arr < end {
        total += *arr;
        arr = arr.offset(1);
    }
    return total;
}
