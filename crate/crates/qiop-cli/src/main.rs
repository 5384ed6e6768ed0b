fn main() {
    println!("qiop");
}
