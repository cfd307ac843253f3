use std::cmp::Ordering;
use std::collections::BinaryHeap;

use pcgmeta_core::camera::astar;
use pcgmeta_core::voxel::{Cell, LayeredGrid};
use pcgmeta_core::{DungeonId, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const N: u32 = 32;

#[derive(PartialEq)]
struct Q(f64, usize);
impl Eq for Q {}
impl Ord for Q {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0)
    }
}
impl PartialOrd for Q {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Single-source shortest distances on an 8-connected grid without corner
/// cutting.
fn dijkstra(solid: &[bool], s: usize) -> Vec<f64> {
    let n = N as i64;
    let free = |x: i64, z: i64| x >= 0 && z >= 0 && x < n && z < n && !solid[(z * n + x) as usize];
    let mut dist = vec![f64::INFINITY; solid.len()];
    dist[s] = 0.0;
    let mut q = BinaryHeap::from([Q(0.0, s)]);
    while let Some(Q(d, i)) = q.pop() {
        if d > dist[i] {
            continue;
        }
        let (x, z) = (i as i64 % n, i as i64 / n);
        for dx in -1..=1i64 {
            for dz in -1..=1i64 {
                if (dx, dz) == (0, 0) || !free(x + dx, z + dz) {
                    continue;
                }
                let w = if dx != 0 && dz != 0 {
                    if !free(x + dx, z) || !free(x, z + dz) {
                        continue;
                    }
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let j = ((z + dz) * n + x + dx) as usize;
                if d + w < dist[j] {
                    dist[j] = d + w;
                    q.push(Q(d + w, j));
                }
            }
        }
    }
    dist
}

fn valid_path(g: &LayeredGrid, cells: &[Cell], s: Cell, t: Cell) -> bool {
    cells.first() == Some(&s)
        && cells.last() == Some(&t)
        && cells.iter().all(|c| !g.is_solid(*c))
        && cells.windows(2).all(|w| {
            let dx = w[0].ix.abs_diff(w[1].ix);
            let dz = w[0].iz.abs_diff(w[1].iz);
            dx <= 1 && dz <= 1 && dx + dz > 0 && (dx + dz == 1 || {
                !g.is_solid(Cell { ix: w[1].ix, ..w[0] }) && !g.is_solid(Cell { iz: w[1].iz, ..w[0] })
            })
        })
}

/// 100 seeded 32x32 grids at 20% solid; from several sources per grid, A*
/// is run to every free goal and compared with the oracle.
pub fn astar_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solvable, mut unsolvable, mut worst) = (0usize, 0usize, 0.0f64);
    for grid in 0..100 {
        let solid: Vec<bool> = (0..N * N).map(|_| rng.gen_bool(0.2)).collect();
        let g = LayeredGrid::from_fn(DungeonId(0), Vec3::ZERO, 0.4, vec![1.2], 0.6, N, N, |_, x, z| solid[(z * N + x) as usize]);
        let free: Vec<usize> = (0..solid.len()).filter(|&i| !solid[i]).collect();
        for _ in 0..3 {
            let s = free[rng.gen_range(0..free.len())];
            let dist = dijkstra(&solid, s);
            let sc = Cell { layer: 0, ix: s as u32 % N, iz: s as u32 / N };
            for &t in &free {
                let tc = Cell { layer: 0, ix: t as u32 % N, iz: t as u32 / N };
                match astar(&g, sc, tc) {
                    Some(p) => {
                        ensure!(dist[t].is_finite(), "grid {grid}: path found to unreachable {tc:?}");
                        let err = (p.cost - dist[t]).abs();
                        worst = worst.max(err);
                        ensure!(err < 1e-9, "grid {grid}: {sc:?}->{tc:?} cost {} vs oracle {}", p.cost, dist[t]);
                        ensure!(valid_path(&g, &p.cells, sc, tc), "grid {grid}: invalid path {sc:?}->{tc:?}");
                        solvable += 1;
                    }
                    None => {
                        ensure!(dist[t].is_infinite(), "grid {grid}: no path but oracle {}", dist[t]);
                        unsolvable += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{solvable} solvable pairs match, {unsolvable} unsolvable agree, max |diff| {worst:.1e}"))
}
