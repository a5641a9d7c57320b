fn main() {
    println!("inrtomo");
}
