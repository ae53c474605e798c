fn main() {
    std::process::exit(dsg::cli::main_with(std::env::args_os()));
}
