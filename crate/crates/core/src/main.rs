fn main() {
    std::process::exit(gdcn::cli::main());
}
