use std::io::Write;

fn main() {
    let env = classcurve::cli::env_parallel();
    let stderr = std::io::stderr();
    let mut log = stderr.lock();
    let code = classcurve::cli::run(std::env::args_os(), env.as_deref(), &mut log);
    let _ = log.flush();
    std::process::exit(code);
}
