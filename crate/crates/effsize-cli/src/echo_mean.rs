//! Built-in test oracle speaking the subprocess line protocol.
//!
//! Handshake on startup, then per batch: a CSV header line, data rows, and
//! a blank terminator on stdin; one prediction per row on stdout. The
//! prediction is the grand mean of every cell in the batch, which is
//! invariant under any within-column permutation — so a correct permutation
//! f^2 against this oracle is exactly zero for every focal column.

use std::io::{self, BufRead, Write};

use effsize_core::blackbox::ORACLE_HANDSHAKE;

pub fn run() -> io::Result<()> {
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{ORACLE_HANDSHAKE}")?;
    stdout.flush()?;

    loop {
        // Header line opens a batch; EOF ends the session.
        let header = match lines.next() {
            None => return Ok(()),
            Some(line) => line?,
        };
        if header.trim().is_empty() {
            continue;
        }

        let mut rows = 0usize;
        let mut cells: Vec<f64> = Vec::new();
        loop {
            let line = match lines.next() {
                None => return Ok(()), // truncated batch; parent sees EOF
                Some(line) => line?,
            };
            if line.is_empty() {
                break;
            }
            rows += 1;
            for cell in line.split(',') {
                let value: f64 = cell.trim().parse().map_err(|_| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("cell `{cell}` is not a number"),
                    )
                })?;
                cells.push(value);
            }
        }
        // Summing in sorted order makes the mean a function of the cell
        // multiset alone, so within-column permutations reproduce it
        // bit for bit.
        cells.sort_by(|a, b| a.total_cmp(b));
        let mean = if cells.is_empty() {
            0.0
        } else {
            cells.iter().sum::<f64>() / cells.len() as f64
        };
        for _ in 0..rows {
            writeln!(stdout, "{mean}")?;
        }
        stdout.flush()?;
    }
}
