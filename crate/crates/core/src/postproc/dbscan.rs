use std::collections::HashMap;

/// A density cluster of pixel coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: Vec<(usize, usize)>,
}

impl Cluster {
    pub fn mass(&self) -> usize {
        self.members.len()
    }

    /// Tight pixel bounds `(x0, y0, x1, y1)`, end-exclusive.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &self.members {
            b = (b.0.min(x), b.1.min(y), b.2.max(x + 1), b.3.max(y + 1));
        }
        b
    }
}

/// Uniform grid over the points with cell side `ceil(eps)`.
struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[(usize, usize)], eps: f64) -> Self {
        let cell = eps.ceil().max(1.0);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            cells.entry(Self::key(cell, x, y)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(cell: f64, x: usize, y: usize) -> (i64, i64) {
        (
            (x as f64 / cell).floor() as i64,
            (y as f64 / cell).floor() as i64,
        )
    }

    /// Indices within `eps` of point `i`, including `i`, ascending.
    fn neighbours(&self, points: &[(usize, usize)], i: usize, eps: f64) -> Vec<usize> {
        let (x, y) = points[i];
        let (kx, ky) = Self::key(self.cell, x, y);
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(list) = self.cells.get(&(kx + dx, ky + dy)) {
                    out.extend(
                        list.iter()
                            .copied()
                            .filter(|&j| within(points[i], points[j], eps)),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub(crate) fn within(a: (usize, usize), b: (usize, usize), eps: f64) -> bool {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    dx * dx + dy * dy <= eps * eps
}

/// Classic DBSCAN over pixel coordinates. A point is core when at least
/// `min_pts` points (itself included) lie within `eps`. Points are scanned in
/// row-major order; a border point joins the first cluster that reaches it.
/// Noise is dropped. Members of each cluster are returned row-major.
pub fn dbscan(points: &[(usize, usize)], eps: f64, min_pts: usize) -> Vec<Cluster> {
    assert!(
        eps > 0.0 && min_pts >= 1,
        "dbscan needs eps > 0 and min_pts >= 1"
    );
    let mut pts = points.to_vec();
    pts.sort_unstable_by_key(|&(x, y)| (y, x));
    let grid = Grid::new(&pts, eps);
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; pts.len()];
    let mut n_clusters = 0;
    for i in 0..pts.len() {
        if label[i] != UNSEEN {
            continue;
        }
        let nb = grid.neighbours(&pts, i, eps);
        if nb.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[i] = c;
        let mut queue: std::collections::VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if label[j] == NOISE {
                label[j] = c;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = c;
            let nbj = grid.neighbours(&pts, j, eps);
            if nbj.len() >= min_pts {
                queue.extend(
                    nbj.into_iter()
                        .filter(|&k| label[k] == UNSEEN || label[k] == NOISE),
                );
            }
        }
    }
    let mut clusters = vec![
        Cluster {
            members: Vec::new()
        };
        n_clusters
    ];
    for (p, &l) in pts.iter().zip(&label) {
        if l < n_clusters {
            clusters[l].members.push(*p);
        }
    }
    clusters
}
