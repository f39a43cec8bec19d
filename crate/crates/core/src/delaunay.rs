//! Delaunay triangulation of integer points.
//!
//! Incremental insertion with Lawson edge flips. Points are integer pixel
//! coordinates, so the orientation and in-circle predicates are evaluated
//! exactly in `i128`.

type Pt = (i64, i64);

fn orient(a: Pt, b: Pt, c: Pt) -> i128 {
    let (abx, aby) = ((b.0 - a.0) as i128, (b.1 - a.1) as i128);
    let (acx, acy) = ((c.0 - a.0) as i128, (c.1 - a.1) as i128);
    abx * acy - aby * acx
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
fn in_circle(a: Pt, b: Pt, c: Pt, d: Pt) -> i128 {
    let (adx, ady) = ((a.0 - d.0) as i128, (a.1 - d.1) as i128);
    let (bdx, bdy) = ((b.0 - d.0) as i128, (b.1 - d.1) as i128);
    let (cdx, cdy) = ((c.0 - d.0) as i128, (c.1 - d.1) as i128);
    let al = adx * adx + ady * ady;
    let bl = bdx * bdx + bdy * bdy;
    let cl = cdx * cdx + cdy * cdy;
    adx * (bdy * cl - bl * cdy) - ady * (bdx * cl - bl * cdx) + al * (bdx * cdy - bdy * cdx)
}

struct Mesh {
    pts: Vec<Pt>,
    /// Index of the vertex at infinity. Ghost triangle `(u, v, G)` stands
    /// for the open half-plane left of `u -> v`, outside the hull.
    ghost: usize,
    tri: Vec<[usize; 3]>,
    /// `nbr[t][i]` is the triangle across the edge opposite vertex `i`.
    nbr: Vec<[usize; 3]>,
}

impl Mesh {
    fn is_ghost(&self, t: usize) -> bool {
        self.tri[t].contains(&self.ghost)
    }

    fn replace_nbr(&mut self, t: usize, old: usize, new: usize) {
        for k in 0..3 {
            if self.nbr[t][k] == old {
                self.nbr[t][k] = new;
                return;
            }
        }
        unreachable!("broken adjacency");
    }

    fn vertex_index(&self, t: usize, v: usize) -> usize {
        (0..3).find(|&k| self.tri[t][k] == v).expect("vertex of triangle")
    }

    /// Visibility walk from a real triangle. Returns a real triangle whose
    /// closure contains `p`, or the ghost of a hull edge `p` strictly sees.
    fn locate(&self, p: Pt, mut t: usize) -> usize {
        'walk: loop {
            if self.is_ghost(t) {
                return t;
            }
            let v = self.tri[t];
            for i in 0..3 {
                let a = self.pts[v[(i + 1) % 3]];
                let b = self.pts[v[(i + 2) % 3]];
                if orient(a, b, p) < 0 {
                    t = self.nbr[t][i];
                    continue 'walk;
                }
            }
            return t;
        }
    }

    fn insert(&mut self, ip: usize, hint: usize) -> usize {
        let p = self.pts[ip];
        let t = self.locate(p, hint);
        if self.is_ghost(t) {
            return self.insert_outside(ip, t);
        }
        let v = self.tri[t];
        let on_edge = (0..3).find(|&i| {
            orient(self.pts[v[(i + 1) % 3]], self.pts[v[(i + 2) % 3]], p) == 0
        });
        let mut stack = Vec::new();
        let first = match on_edge {
            None => {
                let [a, b, c] = v;
                let [na, nb, nc] = self.nbr[t];
                let t0 = t;
                let t1 = self.tri.len();
                let t2 = t1 + 1;
                self.tri[t0] = [a, b, ip];
                self.nbr[t0] = [t1, t2, nc];
                self.tri.push([b, c, ip]);
                self.nbr.push([t2, t0, na]);
                self.tri.push([c, a, ip]);
                self.nbr.push([t0, t1, nb]);
                self.replace_nbr(na, t, t1);
                self.replace_nbr(nb, t, t2);
                stack.extend([t0, t1, t2]);
                t0
            }
            Some(i) => {
                // t = (c, a, b) with p on edge a-b; u = (d, b, a) across it.
                // d may be the ghost vertex when a-b is a hull edge.
                let c = v[i];
                let a = v[(i + 1) % 3];
                let b = v[(i + 2) % 3];
                let nt_a = self.nbr[t][(i + 1) % 3];
                let nt_b = self.nbr[t][(i + 2) % 3];
                let u = self.nbr[t][i];
                let j = (0..3).find(|&k| self.nbr[u][k] == t).expect("mutual adjacency");
                let d = self.tri[u][j];
                let nu_a = self.nbr[u][self.vertex_index(u, a)];
                let nu_b = self.nbr[u][self.vertex_index(u, b)];

                let t1 = t;
                let u2 = u;
                let t2 = self.tri.len();
                let u1 = t2 + 1;
                self.tri[t1] = [c, a, ip];
                self.nbr[t1] = [u1, t2, nt_b];
                self.tri[u2] = [d, b, ip];
                self.nbr[u2] = [t2, u1, nu_a];
                self.tri.push([c, ip, b]);
                self.nbr.push([u2, t1, nt_a]);
                self.tri.push([d, ip, a]);
                self.nbr.push([t1, nu_b, u2]);
                self.replace_nbr(nt_a, t, t2);
                self.replace_nbr(nu_b, u, u1);
                stack.extend([t1, t2, u1, u2]);
                t1
            }
        };
        self.legalize(ip, stack);
        first
    }

    /// `p` lies outside the hull, strictly beyond the edge of ghost `g0`.
    /// Every hull edge visible from `p` becomes a real triangle fanned to `p`.
    fn insert_outside(&mut self, ip: usize, g0: usize) -> usize {
        let p = self.pts[ip];
        let g = self.ghost;
        let visible = |m: &Mesh, t: usize| {
            let [u, v, _] = m.ghost_edge(t);
            orient(m.pts[u], m.pts[v], p) > 0
        };
        // Ghost (u, v, G): the ghost across (v, G) continues from v,
        // the one across (G, u) ends at u.
        let forward = |m: &Mesh, t: usize| {
            let [u, _, _] = m.ghost_edge(t);
            m.nbr[t][m.vertex_index(t, u)]
        };
        let backward = |m: &Mesh, t: usize| {
            let [_, v, _] = m.ghost_edge(t);
            m.nbr[t][m.vertex_index(t, v)]
        };
        let mut chain = vec![g0];
        let mut t = g0;
        loop {
            let n = backward(self, t);
            if n == g0 || !visible(self, n) {
                break;
            }
            chain.insert(0, n);
            t = n;
        }
        t = g0;
        loop {
            let n = forward(self, t);
            if n == chain[0] || !visible(self, n) {
                break;
            }
            chain.push(n);
            t = n;
        }
        let prev_ghost = backward(self, chain[0]);
        let next_ghost = forward(self, *chain.last().unwrap());
        let edges: Vec<[usize; 3]> = chain.iter().map(|&c| self.ghost_edge(c)).collect();
        let outer: Vec<usize> = chain
            .iter()
            .map(|&c| self.nbr[c][self.vertex_index(c, g)])
            .collect();

        let ga = self.tri.len();
        let gb = ga + 1;
        let k = chain.len();
        for (i, &c) in chain.iter().enumerate() {
            let [u, v, _] = edges[i];
            let next = if i + 1 < k { chain[i + 1] } else { gb };
            let prev = if i > 0 { chain[i - 1] } else { ga };
            self.tri[c] = [u, v, ip];
            self.nbr[c] = [next, prev, outer[i]];
        }
        let c0 = edges[0][0];
        let ck = edges[k - 1][1];
        self.tri.push([c0, ip, g]);
        self.nbr.push([gb, prev_ghost, chain[0]]);
        self.tri.push([ip, ck, g]);
        self.nbr.push([next_ghost, ga, chain[k - 1]]);
        self.replace_nbr(prev_ghost, chain[0], ga);
        self.replace_nbr(next_ghost, chain[k - 1], gb);
        self.legalize(ip, chain.clone());
        chain[0]
    }

    /// Vertices of a ghost rotated to `[u, v, G]`.
    fn ghost_edge(&self, t: usize) -> [usize; 3] {
        let i = self.vertex_index(t, self.ghost);
        [self.tri[t][(i + 1) % 3], self.tri[t][(i + 2) % 3], self.ghost]
    }

    fn legalize(&mut self, ip: usize, mut stack: Vec<usize>) {
        while let Some(t) = stack.pop() {
            if self.is_ghost(t) {
                continue;
            }
            let Some(i) = (0..3).find(|&k| self.tri[t][k] == ip) else {
                continue;
            };
            let u = self.nbr[t][i];
            if self.is_ghost(u) {
                continue;
            }
            let a = self.tri[t][(i + 1) % 3];
            let b = self.tri[t][(i + 2) % 3];
            let j = (0..3).find(|&k| self.nbr[u][k] == t).expect("mutual adjacency");
            let q = self.tri[u][j];
            let pts = &self.pts;
            if in_circle(pts[ip], pts[a], pts[b], pts[q]) <= 0 {
                continue;
            }
            let ta = self.nbr[t][(i + 1) % 3];
            let tb = self.nbr[t][(i + 2) % 3];
            let ua = self.nbr[u][self.vertex_index(u, a)];
            let ub = self.nbr[u][self.vertex_index(u, b)];
            // t' = (p, a, q), u' = (p, q, b)
            self.tri[t] = [ip, a, q];
            self.nbr[t] = [ub, u, tb];
            self.tri[u] = [ip, q, b];
            self.nbr[u] = [ua, ta, t];
            self.replace_nbr(ub, u, t);
            self.replace_nbr(ta, t, u);
            stack.push(t);
            stack.push(u);
        }
    }
}

/// Delaunay triangles over `points`, as counter-clockwise index triples.
///
/// Duplicate points are ignored (the first occurrence is used). Fewer than
/// three distinct points, or all points collinear, give no triangles.
/// Cocircular configurations get one of the valid triangulations.
pub fn triangulate(points: &[(i64, i64)]) -> Vec<[usize; 3]> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (points[i].1, points[i].0, i));
    order.dedup_by_key(|i| points[*i]);
    if order.len() < 3 {
        return Vec::new();
    }
    for &i in &order {
        let (x, y) = points[i];
        assert!(
            x.abs() < 1 << 28 && y.abs() < 1 << 28,
            "coordinates too large for exact predicates"
        );
    }
    let pts: Vec<Pt> = order.iter().map(|&i| points[i]).collect();
    let n = pts.len();
    let Some(k) = (2..n).find(|&k| orient(pts[0], pts[1], pts[k]) != 0) else {
        return Vec::new();
    };
    let (a, b, c) = if orient(pts[0], pts[1], pts[k]) > 0 {
        (0, 1, k)
    } else {
        (1, 0, k)
    };
    let g = n;
    let mut all = pts;
    all.push((0, 0));
    // real 0 = (a, b, c); ghosts 1 = (b, a, G), 2 = (c, b, G), 3 = (a, c, G)
    let mut mesh = Mesh {
        pts: all,
        ghost: g,
        tri: vec![[a, b, c], [b, a, g], [c, b, g], [a, c, g]],
        nbr: vec![[2, 3, 1], [3, 2, 0], [1, 3, 0], [2, 1, 0]],
    };
    let mut hint = 0;
    for ip in 0..n {
        if ip == a || ip == b || ip == c {
            continue;
        }
        hint = mesh.insert(ip, hint);
    }
    mesh.tri
        .iter()
        .filter(|t| !t.contains(&g))
        .map(|t| [order[t[0]], order[t[1]], order[t[2]]])
        .collect()
}
