//! CSV output for value grids and trajectories.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::solver::ValueGrid;
use crate::trajectory::Trajectory;
use std::io::Write;

/// `-0` prints as `0`.
fn num<T: Scalar>(x: T) -> f64 {
    x.as_f64() + 0.0
}

/// Writes `t,x1..xd,stratumId,layerId,value` rows for every `stride`-th
/// time step (the final step is always included) and every node of the
/// reported box. Continuous grids have one layer per node, named after
/// the node's stratum.
pub fn write_grid_csv<T: Scalar, W: Write>(v: &ValueGrid<T>, stride: usize, out: &mut W) -> Result<()> {
    let g = &v.grid;
    let d = g.dim();
    write!(out, "t")?;
    for i in 1..=d {
        write!(out, ",x{i}")?;
    }
    writeln!(out, ",stratumId,layerId,value")?;
    let nodes = g.box_nodes();
    let stride = stride.max(1);
    let mut x = vec![T::zero(); d];
    for n in (0..=g.steps).filter(|&n| n % stride == 0 || n == g.steps) {
        let t = num(g.time(n));
        for &node in &nodes {
            g.node_coords(node, &mut x);
            for j in v.layers(node) {
                write!(out, "{t}")?;
                for c in &x {
                    write!(out, ",{}", num(*c))?;
                }
                writeln!(out, ",{},{},{}", g.node_stratum[node], v.layer_strata[j], num(v.values[n][j]))?;
            }
        }
    }
    Ok(())
}

/// Writes `time,x1..xd,stratumId,controlIndex,eta` rows followed by one
/// `# event` comment line per interface crossing.
pub fn write_trajectory_csv<T: Scalar, W: Write>(traj: &Trajectory<T>, out: &mut W) -> Result<()> {
    let d = traj.states.first().map_or(0, Vec::len);
    write!(out, "time")?;
    for i in 1..=d {
        write!(out, ",x{i}")?;
    }
    writeln!(out, ",stratumId,controlIndex,eta")?;
    for k in 0..traj.len() {
        write!(out, "{}", num(traj.times[k]))?;
        for c in &traj.states[k] {
            write!(out, ",{}", num(*c))?;
        }
        writeln!(out, ",{},{},{}", traj.strata[k], traj.controls[k], num(traj.eta[k]))?;
    }
    for e in &traj.events {
        writeln!(out, "# event time={} from={} to={}", num(e.time), e.from, e.to)?;
    }
    Ok(())
}
