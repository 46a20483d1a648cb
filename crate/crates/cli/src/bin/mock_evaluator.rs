//! Stand-in for a synthesis tool, speaking the external evaluator protocol.
//!
//! Reads the graph embedded in the netlist header and prints one
//! `target area delay` line per delay target. Tighter targets buy delay
//! with area, down to 60% of the unconstrained delay.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use prefixopt::eval::analytical_raw;
use prefixopt::netlist::graph_json_from_header;
use prefixopt::PrefixGraph;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Behave {
    Ok,
    /// Exit with status 3 after printing valid output.
    Exit,
    Garbage,
    /// Omit the last target.
    Partial,
    /// Sleep for `--sleep-secs` before answering.
    Sleep,
}

#[derive(Parser)]
struct Args {
    #[arg(long, value_enum, default_value = "ok")]
    behave: Behave,
    #[arg(long, default_value_t = 5.0)]
    sleep_secs: f64,
    /// Appends one line per invocation.
    #[arg(long)]
    count_file: Option<PathBuf>,
    #[arg(long)]
    netlist: PathBuf,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
}

/// Area in square micrometres and delay in nanoseconds at one target.
fn synthesize(area_cells: f64, levels: f64, target: f64) -> (f64, f64) {
    let base_area = 100.0 * area_cells + 50.0;
    let base_delay = 0.1 * levels + 0.05;
    let achieved = target.max(0.6 * base_delay).min(base_delay);
    let squeeze = (base_delay - achieved) / base_delay;
    (base_area * (1.0 + 2.5 * squeeze), achieved)
}

fn main() {
    let args = Args::parse();
    if let Some(path) = &args.count_file {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).expect("count file");
        writeln!(f, "{}", args.netlist.display()).expect("count file write");
    }
    let text = std::fs::read_to_string(&args.netlist).expect("netlist readable");
    let json = graph_json_from_header(&text).expect("graph in netlist header");
    let g = PrefixGraph::from_json(json).expect("valid graph");
    let raw = analytical_raw(&g);

    if args.behave == Behave::Garbage {
        println!("synthesis finished, no numbers today");
        return;
    }
    if args.behave == Behave::Sleep {
        std::thread::sleep(std::time::Duration::from_secs_f64(args.sleep_secs));
    }
    let mut targets = args.targets.clone();
    if args.behave == Behave::Partial {
        targets.pop();
    }
    for t in targets {
        let (area, delay) = synthesize(raw.area, raw.delay, t);
        println!("{t} {area} {delay}");
    }
    if args.behave == Behave::Exit {
        std::process::exit(3);
    }
}
