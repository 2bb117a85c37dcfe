fn show(p: *const i32) {
    unsafe {
        println!("{} {}", *p, *p.add(1));
    }
}
