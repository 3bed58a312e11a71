//! CLI for the native range coder.
//!
//! `batch` processes many (cdf, sequence) trials in one call over a compact
//! little-endian binary protocol on stdin/stdout, which is how the primary
//! package's cross-equivalence test drives it:
//!
//! request:  i64 n_trials, then per trial
//!           i64 n_tables, i64 row_len, i64 n_symbols,
//!           i32 cdfs[n_tables * row_len], i32 index[n], i32 symbols[n]
//! response: per trial, i64 blob_len, u8 blob[blob_len], i32 decoded[n]
//!
//! `encode` / `decode` operate on single sequences via text files for ad-hoc
//! inspection.

use std::fs;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ugic_coder::{range_decode, range_encode, CdfSet};

#[derive(Parser)]
#[command(name = "ugic-coder", about = "bit-exact range coder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run many encode+decode trials over the binary stdin/stdout protocol.
    Batch,
    /// Encode whitespace-separated symbols with a cdf file (one row of
    /// cumulative frequencies per line).
    Encode {
        symbols: String,
        cdf: String,
        #[arg(short, long)]
        output: String,
        /// optional per-symbol table indices file
        #[arg(long)]
        index: Option<String>,
    },
    /// Decode a payload produced by `encode` back into symbols.
    Decode {
        payload: String,
        cdf: String,
        #[arg(long)]
        count: usize,
        #[arg(short, long)]
        output: String,
        #[arg(long)]
        index: Option<String>,
    },
}

fn read_i64(buf: &[u8], off: &mut usize) -> Result<i64> {
    let bytes: [u8; 8] = buf
        .get(*off..*off + 8)
        .context("request truncated")?
        .try_into()?;
    *off += 8;
    Ok(i64::from_le_bytes(bytes))
}

fn read_i32s(buf: &[u8], off: &mut usize, n: usize) -> Result<Vec<i32>> {
    let end = *off + 4 * n;
    let slice = buf.get(*off..end).context("request truncated")?;
    *off = end;
    Ok(slice
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn run_batch() -> Result<()> {
    let mut input = Vec::new();
    std::io::stdin().read_to_end(&mut input)?;
    let mut off = 0usize;
    let n_trials = read_i64(&input, &mut off)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for _ in 0..n_trials {
        let n_tables = read_i64(&input, &mut off)? as usize;
        let row_len = read_i64(&input, &mut off)? as usize;
        let n_symbols = read_i64(&input, &mut off)? as usize;
        let flat = read_i32s(&input, &mut off, n_tables * row_len)?;
        let index = read_i32s(&input, &mut off, n_symbols)?;
        let symbols = read_i32s(&input, &mut off, n_symbols)?;
        let rows: Vec<Vec<u32>> = flat
            .chunks_exact(row_len)
            .map(|r| r.iter().map(|&v| v as u32).collect())
            .collect();
        let cdfs = CdfSet::new(rows)?;
        let blob = range_encode(&symbols, &cdfs, &index)?;
        let decoded = range_decode(&blob, &cdfs, &index, n_symbols)?;
        out.write_all(&(blob.len() as i64).to_le_bytes())?;
        out.write_all(&blob)?;
        for s in decoded {
            out.write_all(&s.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn load_cdf(path: &str) -> Result<CdfSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let rows: Vec<Vec<u32>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<u32>().context("bad cdf entry"))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        bail!("cdf file {path} is empty");
    }
    Ok(CdfSet::new(rows)?)
}

fn load_i32s(path: &str) -> Result<Vec<i32>> {
    Ok(fs::read_to_string(path)?
        .split_whitespace()
        .map(|t| t.parse::<i32>().context("bad integer"))
        .collect::<Result<_>>()?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Batch => run_batch(),
        Command::Encode {
            symbols,
            cdf,
            output,
            index,
        } => {
            let syms = load_i32s(&symbols)?;
            let cdfs = load_cdf(&cdf)?;
            let idx = match index {
                Some(p) => load_i32s(&p)?,
                None => vec![0; syms.len()],
            };
            if idx.len() != syms.len() {
                bail!("index length does not match symbols");
            }
            let blob = range_encode(&syms, &cdfs, &idx)?;
            fs::write(&output, &blob)?;
            println!("{} symbols -> {} bytes", syms.len(), blob.len());
            Ok(())
        }
        Command::Decode {
            payload,
            cdf,
            count,
            output,
            index,
        } => {
            let blob = fs::read(&payload)?;
            let cdfs = load_cdf(&cdf)?;
            let idx = match index {
                Some(p) => load_i32s(&p)?,
                None => vec![0; count],
            };
            if idx.len() != count {
                bail!("index length does not match count");
            }
            let syms = range_decode(&blob, &cdfs, &idx, count)?;
            let text: Vec<String> = syms.iter().map(|s| s.to_string()).collect();
            fs::write(&output, text.join(" "))?;
            println!("{} bytes -> {} symbols", blob.len(), count);
            Ok(())
        }
    }
}
