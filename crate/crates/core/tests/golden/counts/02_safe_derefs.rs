fn bump(x: &mut i32) {
    *x += 1;
}

fn main() {
    let mut v = 1;
    bump(&mut v);
    let r = &v;
    println!("{}", *r);
}
