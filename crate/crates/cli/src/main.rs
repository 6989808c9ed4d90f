use std::process::ExitCode;

fn main() -> ExitCode {
    match strucbreak_cli::main_with_args(std::env::args_os()) {
        Ok(out) => {
            if out.written_to.is_none() {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(c) = e.downcast_ref::<clap::Error>() {
                c.exit();
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
