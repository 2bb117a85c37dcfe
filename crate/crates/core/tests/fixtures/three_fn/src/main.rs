#![allow(non_snake_case, unused_mut)]

use std::io::Read;

pub unsafe extern "C" fn sum_array(mut arr: *const i32, mut n: i32) -> i32 {
    let mut total: i32 = 0;
    let mut i: i32 = 0;
    while i < n {
        total += *arr.offset(i as isize);
        i += 1;
    }
    return total;
}

pub unsafe extern "C" fn max_array(mut arr: *const i32, mut n: i32) -> i32 {
    let mut best: i32 = *arr;
    let mut i: i32 = 1;
    while i < n {
        let mut v: i32 = *arr.offset(i as isize);
        if v > best {
            best = v;
        }
        i += 1;
    }
    return best;
}

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let mut values: Vec<i32> = input.split_whitespace().map(|t| t.parse().unwrap()).collect();
    if values.is_empty() {
        std::process::exit(1);
    }
    unsafe {
        let mut p: *const i32 = values.as_ptr();
        let mut n: i32 = values.len() as i32;
        let mut s: i32 = sum_array(p, n);
        let mut m: i32 = max_array(p, n);
        println!("sum {}", s);
        println!("max {}", m);
    }
}
