//! Multi-resolution feature grid addressing.
//!
//! Each level is a regular lattice over the unit cube. Coarse levels are
//! stored densely; a level whose vertex count exceeds the table size is
//! spatially hashed into it.

/// Addressing for one grid level.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLevel {
    pub resolution: u32,
    pub entries: usize,
    pub hashed: bool,
}

const PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

impl GridLevel {
    pub fn new(resolution: u32, table_size: usize) -> Self {
        let side = resolution as usize + 1;
        let dense = side * side * side;
        if dense <= table_size {
            Self { resolution, entries: dense, hashed: false }
        } else {
            Self { resolution, entries: table_size, hashed: true }
        }
    }

    #[inline]
    fn index(&self, x: u32, y: u32, z: u32) -> u32 {
        if self.hashed {
            let h = (x as u64).wrapping_mul(PRIMES[0])
                ^ (y as u64).wrapping_mul(PRIMES[1])
                ^ (z as u64).wrapping_mul(PRIMES[2]);
            (h % self.entries as u64) as u32
        } else {
            let side = self.resolution + 1;
            (z * side + y) * side + x
        }
    }

    /// Entry indices and trilinear weights of the 8 lattice corners around
    /// `u`, a point in the unit cube.
    #[inline]
    pub fn corners(&self, u: [f64; 3], index: &mut [u32], weight: &mut [f64]) {
        let r = self.resolution as f64;
        let mut base = [0u32; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let x = u[a] * r;
            let i = (x.floor().max(0.0) as u32).min(self.resolution - 1);
            base[a] = i;
            frac[a] = x - i as f64;
        }
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
            index[c] = self.index(base[0] + dx as u32, base[1] + dy as u32, base[2] + dz as u32);
            weight[c] = wx * wy * wz;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity_and_hit_vertices() {
        let level = GridLevel::new(4, 1 << 10);
        assert!(!level.hashed);
        let mut idx = [0u32; 8];
        let mut w = [0f64; 8];
        level.corners([0.3, 0.71, 0.05], &mut idx, &mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // A lattice vertex puts all weight on one corner.
        level.corners([0.25, 0.5, 1.0], &mut idx, &mut w);
        let (best, &wmax) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!((wmax - 1.0).abs() < 1e-12);
        assert_eq!(idx[best], (4 * 5 + 2) * 5 + 1);
    }

    #[test]
    fn fine_levels_hash_into_table() {
        let level = GridLevel::new(64, 1 << 12);
        assert!(level.hashed);
        let mut idx = [0u32; 8];
        let mut w = [0f64; 8];
        level.corners([0.9, 0.1, 0.5], &mut idx, &mut w);
        assert!(idx.iter().all(|&i| (i as usize) < level.entries));
    }
}
