fn main() {
    std::process::exit(mbb_cli::run());
}

mod mbb_cli {
    pub fn run() -> i32 {
        eprintln!("cli not wired yet");
        2
    }
}
