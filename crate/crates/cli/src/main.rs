use clap::Parser;
use regmatch_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let report = run(&cli);
    let text = report.render(cli.json);
    if report.exit == 2 && !cli.json {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
    std::process::exit(report.exit);
}
