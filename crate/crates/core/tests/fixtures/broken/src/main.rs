fn half(x: i32) -> i32 {
    let y: i32 = "two";
    x / y
}

fn main() {
    println!("{}", half(4));
}
