use std::ptr;

fn shuffle(buf: &mut [u8]) -> u8 {
    let p = buf.as_mut_ptr();
    unsafe {
        let first = ptr::read(p);
        ptr::write(p.add(1), first);
        let bytes: [u8; 4] = std::mem::transmute(7u32);
        first + bytes[0]
    }
}
