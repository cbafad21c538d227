//! Binary checkpoints.
//!
//! ```text
//! BEQN1\n
//! <tasks> <tiers> <hidden>\n
//! <parameters as little-endian f64, in QNetwork order>
//! ```
//! The input dimension is `tasks + tiers + 1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::QNetwork;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "BEQN1";

pub fn write_checkpoint<W: Write>(net: &QNetwork, out: &mut W) -> Result<()> {
    let tiers = net.outputs();
    let tasks = net
        .input_dim()
        .checked_sub(tiers + 1)
        .filter(|t| *t > 0)
        .ok_or_else(|| Error::Dimension(format!("input dim {} has no room for task features", net.input_dim())))?;
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "{tasks} {tiers} {}", net.hidden())?;
    let mut bytes = Vec::with_capacity(net.params().len() * 8);
    for p in net.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn save_checkpoint(net: &QNetwork, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn take_line<'a>(bytes: &mut &'a [u8]) -> Result<&'a str> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

/// Parses a checkpoint. When `expect` is `Some((tasks, tiers))` the stored
/// dimensions must match.
pub fn read_checkpoint(mut bytes: &[u8], expect: Option<(usize, usize)>) -> Result<QNetwork> {
    if !bytes.starts_with(CHECKPOINT_MAGIC.as_bytes()) {
        return Err(Error::Format("bad magic".into()));
    }
    if take_line(&mut bytes)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dims: Vec<usize> = take_line(&mut bytes)?
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| Error::Format(format!("bad dimension `{f}`"))))
        .collect::<Result<_>>()?;
    let [tasks, tiers, hidden] = dims[..] else {
        return Err(Error::Format("expected `<tasks> <tiers> <hidden>`".into()));
    };
    if tasks == 0 || tiers == 0 || hidden == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    if let Some((want_tasks, want_tiers)) = expect {
        if (want_tasks, want_tiers) != (tasks, tiers) {
            return Err(Error::Dimension(format!(
                "checkpoint is for {tasks} tasks x {tiers} tiers, expected {want_tasks} x {want_tiers}"
            )));
        }
    }
    let input_dim = tasks + tiers + 1;
    let count = input_dim * hidden + hidden + hidden * tiers + tiers;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!("expected {} parameter bytes, found {}", count * 8, bytes.len())));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    QNetwork::from_params(input_dim, hidden, tiers, params)
}

pub fn load_checkpoint(path: &Path, expect: Option<(usize, usize)>) -> Result<QNetwork> {
    read_checkpoint(&fs::read(path)?, expect)
}
