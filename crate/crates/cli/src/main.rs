mod app;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = app::Cli::parse();
    let result = app::run(&cli).and_then(|out| {
        out.emit(cli.command.common().out_dir())?;
        Ok(out.verdict)
    });
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(verdict)) | Err(verdict) => {
            eprintln!("conv-limit: {verdict}");
            ExitCode::from(verdict.exit_code())
        }
    }
}
