fn main() {
    let outcome = clingress_cli::run(std::env::args_os());
    for line in &outcome.stdout {
        println!("{}", line.trim_end_matches('\n'));
    }
    for line in &outcome.stderr {
        eprintln!("{}", line.trim_end_matches('\n'));
    }
    std::process::exit(outcome.exit_code);
}
