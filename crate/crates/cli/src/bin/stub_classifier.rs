//! Line-protocol classifier server for tests and demos.
//!
//! ```text
//! mgmw-stub-classifier --model out/model.json
//! mgmw-stub-classifier --sign --dofs 2 --frames 3
//! mgmw-stub-classifier --constant 1 --classes 3 --dofs 2 --frames 3
//! ```

use std::io::{stdin, stdout, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;

use mgmw::classifier::ClassifierModel;
use mgmw::protocol::{serve, ServerInfo};
use mgmw::Motion;

#[derive(Parser, Debug)]
#[command(name = "mgmw-stub-classifier", about = "Serve a classifier over the line protocol")]
struct Args {
    /// Checkpoint written by `mgmw train`.
    #[arg(long, conflicts_with_all = ["sign", "constant"])]
    model: Option<PathBuf>,
    /// Two classes: 1 when the sum of all values is positive.
    #[arg(long, conflicts_with = "constant")]
    sign: bool,
    /// Always answer this label.
    #[arg(long)]
    constant: Option<usize>,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 1)]
    dofs: usize,
    #[arg(long, default_value_t = 1)]
    frames: usize,
}

#[derive(Deserialize)]
struct Checkpoint {
    model: ClassifierModel,
}

fn run(args: Args) -> Result<(), String> {
    let input = stdin().lock();
    let output = BufWriter::new(stdout().lock());
    if let Some(path) = args.model {
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let m = ck.model;
        let info = ServerInfo {
            classes: m.classes(),
            dofs: m.dofs(),
            frames: m.n_frames(),
        };
        return serve(input, output, info, |frames| {
            let flat: Vec<f64> = frames.iter().flatten().copied().collect();
            m.predict(&Motion::from_flat(m.representation(), info.frames, info.dofs, flat)?)
        })
        .map_err(|e| e.to_string());
    }
    let classes = if args.sign { 2 } else { args.classes };
    let info = ServerInfo {
        classes,
        dofs: args.dofs,
        frames: args.frames,
    };
    let constant = args.constant;
    if let Some(c) = constant {
        if c >= classes {
            return Err(format!("--constant {c}: must be below --classes {classes}"));
        }
    } else if !args.sign {
        return Err("one of --model, --sign or --constant is required".into());
    }
    serve(input, output, info, move |frames| {
        Ok(constant.unwrap_or_else(|| {
            let s = frames.iter().flatten().fold(0.0, |a, v| a + v);
            usize::from(s > 0.0)
        }))
    })
    .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
