#![allow(non_upper_case_globals, static_mut_refs)]

use std::ffi::c_int;

pub static mut counter: c_int = 0;

pub unsafe extern "C" fn bump(mut by: c_int) -> c_int {
    counter += by;
    return counter;
}

fn main() {
    unsafe {
        bump(2);
        let mut total: c_int = bump(3);
        println!("{}", total);
    }
}
