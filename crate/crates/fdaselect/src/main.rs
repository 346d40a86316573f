use std::process::ExitCode;

fn main() -> ExitCode {
    match fdaselect::cli::main_with_args(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(fdaselect::cli::Exit::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(fdaselect::cli::Exit::App(e)) => {
            eprintln!("fdaselect: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
