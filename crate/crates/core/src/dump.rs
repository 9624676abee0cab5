//! CSV dumps of walks, chain paths, kernels and convergence tables.

use std::io::{self, Write};

use crate::chain::ChainPath;
use crate::limit::ReplicaProfile;
use crate::star_graph::DiscreteMeasure;
use crate::walk::WalkWindow;

/// `index,increment,value`; the first row carries increment 0.
pub fn write_walk(out: &mut impl Write, walk: &WalkWindow) -> io::Result<()> {
    writeln!(out, "index,increment,value")?;
    let mut prev = None;
    for (i, &v) in walk.values().iter().enumerate() {
        let inc = prev.map_or(0, |p| v - p);
        writeln!(out, "{},{},{}", walk.start() + i as i64, inc, v)?;
        prev = Some(v);
    }
    Ok(())
}

/// Parses the output of [`write_walk`].
pub fn read_walk(text: &str) -> Option<WalkWindow> {
    let mut start = None;
    let mut values = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut fields = line.split(',').map(str::trim);
        let index: i64 = fields.next()?.parse().ok()?;
        let _increment: i64 = fields.next()?.parse().ok()?;
        let value: i64 = fields.next()?.parse().ok()?;
        start.get_or_insert(index);
        values.push(value);
    }
    WalkWindow::from_values(start?, &values).ok()
}

/// `time,ray,radius`.
pub fn write_chain(out: &mut impl Write, path: &ChainPath) -> io::Result<()> {
    writeln!(out, "time,ray,radius")?;
    for (k, x) in path.positions.iter().enumerate() {
        writeln!(out, "{},{},{}", k, x.ray(), x.radius())?;
    }
    Ok(())
}

/// `p,n,ray,radius,weight_num,weight_den`, one row per atom.
pub fn write_kernel(
    out: &mut impl Write,
    p: i64,
    n: i64,
    kernel: &DiscreteMeasure,
) -> io::Result<()> {
    for (x, w) in kernel.atoms() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p,
            n,
            x.ray(),
            x.radius(),
            w.numer(),
            w.denom()
        )?;
    }
    Ok(())
}

pub const KERNEL_HEADER: &str = "p,n,ray,radius,weight_num,weight_den";

/// `n,replica,sup_distance`.
pub fn write_distance_table(out: &mut impl Write, rows: &[ReplicaProfile]) -> io::Result<()> {
    writeln!(out, "n,replica,sup_distance")?;
    for r in rows {
        writeln!(out, "{},{},{:.12e}", r.n, r.replica, r.sup_distance)?;
    }
    Ok(())
}

/// `n,replica,sup_beta`.
pub fn write_beta_table(out: &mut impl Write, rows: &[ReplicaProfile]) -> io::Result<()> {
    writeln!(out, "n,replica,sup_beta")?;
    for r in rows {
        writeln!(out, "{},{},{:.12e}", r.n, r.replica, r.sup_beta)?;
    }
    Ok(())
}
