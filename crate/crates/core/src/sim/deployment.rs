//! Node placement, nearest-SAP association and cached path gains.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// A user that holds queues; users beyond a cell's cap are dropped at
/// deployment and never generate traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceUser {
    pub pos: [f64; 2],
    pub cell: u32,
    /// Distance to the serving SAP, meters.
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct Deployment {
    pub side: f64,
    pub torus: bool,
    pub saps: Vec<[f64; 2]>,
    pub users: Vec<ServiceUser>,
    /// Users dropped because their cell already held `K` users.
    pub excluded_users: usize,
    /// Service-user indices per cell, ascending.
    pub cell_users: Vec<Vec<u32>>,
    /// Edge reuse group of each cell, `0..Δ`.
    pub edge_group: Vec<u8>,
    half_alpha: f64,
    sap_sap_gain: Vec<f64>,
    sap_user_gain: Vec<f64>,
}

impl Deployment {
    /// Poisson SAPs and users on the `side × side` window, groups i.i.d.
    /// uniform.
    #[allow(clippy::too_many_arguments)]
    pub fn generate<G: Rng>(
        rng: &mut G,
        side: f64,
        torus: bool,
        sap_density: f64,
        user_density: f64,
        max_users: usize,
        reuse_factor: usize,
        alpha: f64,
    ) -> Self {
        let area = side * side;
        let n_saps = poisson(rng, sap_density * area);
        let saps: Vec<[f64; 2]> = (0..n_saps).map(|_| uniform_point(rng, side)).collect();
        let n_users = poisson(rng, user_density * area);
        let users: Vec<[f64; 2]> = (0..n_users).map(|_| uniform_point(rng, side)).collect();
        let groups = (0..n_saps).map(|_| rng.random_range(0..reuse_factor) as u8).collect();
        Self::from_points(side, torus, saps, &users, groups, max_users, alpha)
    }

    /// Associates `users` (in order) with their nearest SAP, keeping the
    /// first `max_users` of each cell.
    pub fn from_points(
        side: f64,
        torus: bool,
        saps: Vec<[f64; 2]>,
        users: &[[f64; 2]],
        edge_group: Vec<u8>,
        max_users: usize,
        alpha: f64,
    ) -> Self {
        assert_eq!(saps.len(), edge_group.len());
        let geometry = Geometry { side, torus };
        let mut cell_users = vec![Vec::new(); saps.len()];
        let mut service = Vec::new();
        let mut excluded = 0;
        if !saps.is_empty() {
            for &p in users {
                let (cell, d2) = saps
                    .iter()
                    .enumerate()
                    .map(|(c, &s)| (c, geometry.dist2(p, s)))
                    .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
                if cell_users[cell].len() >= max_users {
                    excluded += 1;
                    continue;
                }
                cell_users[cell].push(service.len() as u32);
                service.push(ServiceUser {
                    pos: p,
                    cell: cell as u32,
                    distance: d2.sqrt(),
                });
            }
        } else {
            excluded = users.len();
        }
        let half_alpha = alpha / 2.0;
        let gain = |a: [f64; 2], b: [f64; 2]| path_gain(geometry.dist2(a, b), half_alpha);
        let sap_sap_gain = saps.iter().flat_map(|&a| saps.iter().map(move |&b| gain(a, b))).collect();
        let sap_user_gain = saps
            .iter()
            .flat_map(|&a| service.iter().map(move |u| gain(a, u.pos)))
            .collect();
        Self {
            side,
            torus,
            saps,
            users: service,
            excluded_users: excluded,
            cell_users,
            edge_group,
            half_alpha,
            sap_sap_gain,
            sap_user_gain,
        }
    }

    pub fn cells(&self) -> usize {
        self.saps.len()
    }

    pub fn sap_sap(&self, a: u32, b: u32) -> f64 {
        self.sap_sap_gain[a as usize * self.saps.len() + b as usize]
    }

    pub fn sap_user(&self, sap: u32, user: u32) -> f64 {
        self.sap_user_gain[sap as usize * self.users.len() + user as usize]
    }

    pub fn user_user(&self, a: u32, b: u32) -> f64 {
        let geometry = Geometry {
            side: self.side,
            torus: self.torus,
        };
        path_gain(
            geometry.dist2(self.users[a as usize].pos, self.users[b as usize].pos),
            self.half_alpha,
        )
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    side: f64,
    torus: bool,
}

impl Geometry {
    fn dist2(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut dx = (a[0] - b[0]).abs();
        let mut dy = (a[1] - b[1]).abs();
        if self.torus {
            dx = dx.min(self.side - dx);
            dy = dy.min(self.side - dy);
        }
        dx * dx + dy * dy
    }
}

fn path_gain(d2: f64, half_alpha: f64) -> f64 {
    d2.max(1e-12).powf(-half_alpha)
}

fn poisson<G: Rng>(rng: &mut G, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

fn uniform_point<G: Rng>(rng: &mut G, side: f64) -> [f64; 2] {
    [rng.random_range(0.0..side), rng.random_range(0.0..side)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn association_and_cap() {
        let saps = vec![[10.0, 10.0], [90.0, 90.0]];
        let users = [[12.0, 10.0], [11.0, 11.0], [13.0, 13.0], [80.0, 85.0]];
        let d = Deployment::from_points(100.0, false, saps, &users, vec![0, 1], 2, 4.0);
        assert_eq!(d.users.len(), 3);
        assert_eq!(d.excluded_users, 1);
        assert_eq!(d.cell_users, vec![vec![0, 1], vec![2]]);
        assert!((d.users[0].distance - 2.0).abs() < 1e-12);
        assert!((d.sap_user(0, 0) - 2f64.powi(-4)).abs() < 1e-15);
    }

    #[test]
    fn torus_wraps() {
        let saps = vec![[1.0, 50.0], [99.0, 50.0]];
        let d = Deployment::from_points(100.0, true, saps.clone(), &[[98.0, 50.0]], vec![0, 0], 5, 2.5);
        assert!((d.sap_sap(0, 1) - 2f64.powf(-2.5)).abs() < 1e-15);
        assert_eq!(d.users[0].cell, 1);
        let flat = Deployment::from_points(100.0, false, saps, &[[98.0, 50.0]], vec![0, 0], 5, 2.5);
        assert!((flat.sap_sap(0, 1) - 98f64.powf(-2.5)).abs() < 1e-15);
    }

    #[test]
    fn generated_counts_are_plausible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Deployment::generate(&mut rng, 800.0, true, 1e-4, 1e-2, 50, 2, 3.8);
        assert!((40..=90).contains(&d.cells()));
        assert!(d.cell_users.iter().all(|c| c.len() <= 50));
        assert!((6000..=6800).contains(&(d.users.len() + d.excluded_users)));
        assert!(d.edge_group.iter().all(|&g| g < 2));
    }

    #[test]
    fn no_saps_means_no_service() {
        let d = Deployment::from_points(100.0, true, vec![], &[[1.0, 1.0]], vec![], 5, 4.0);
        assert!(d.users.is_empty());
        assert_eq!(d.excluded_users, 1);
    }
}
