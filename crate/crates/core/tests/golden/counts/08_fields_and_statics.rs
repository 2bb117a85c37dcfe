pub struct Node {
    pub next: *mut Node,
    pub value: i32,
    pub data: Option<*const u8>,
}

static mut HEAD: *mut Node = 0 as *mut Node;
const EMPTY: *const u8 = std::ptr::null();

fn value_of(n: &Node) -> i32 {
    n.value
}
