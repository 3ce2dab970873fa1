//! Convex cells built by successive half-space clipping.
//!
//! A [`ConvexPolytope`] is stored as a boundary representation: a vertex list
//! plus one counterclockwise (seen from outside) index cycle per face. Each
//! face remembers the plane it lies on, so clipping never has to re-derive
//! face planes from possibly perturbed vertices.

use glam::DVec3;
use thiserror::Error;

/// Vertices closer than this to a clipping plane are treated as lying on it.
pub const ON_PLANE_EPS: f64 = 1e-12;

/// Face normals whose angle is below this are considered the same plane.
pub const COPLANAR_ANGLE_TOL: f64 = 1e-9;

/// Absolute tolerance (length units) used by [`ConvexPolytope::validate`].
pub const VALIDATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("site coincides with the generator; no bisector exists")]
    DegenerateSite,
    #[error("half-space normal must be non-zero and finite")]
    DegenerateNormal,
    #[error("cell radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
    #[error("generator does not strictly satisfy the half-space (signed distance {0:e})")]
    GeneratorOutside(f64),
    #[error("invalid polytope: {0}")]
    Invalid(String),
}

/// The closed half-space `{ y : normal · y <= offset }` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: DVec3,
    pub offset: f64,
}

impl HalfSpace {
    /// Builds a half-space from any non-zero normal; both sides of the
    /// inequality are divided by the normal's length.
    pub fn new(normal: DVec3, offset: f64) -> Result<Self, GeometryError> {
        let len = normal.length();
        if !(len > 0.0 && len.is_finite() && offset.is_finite()) {
            return Err(GeometryError::DegenerateNormal);
        }
        Ok(Self {
            normal: normal / len,
            offset: offset / len,
        })
    }

    /// Points closer to the origin than to `site`.
    pub fn bisector(site: DVec3) -> Result<Self, GeometryError> {
        let len = site.length();
        if !(len > 0.0 && len.is_finite()) {
            return Err(GeometryError::DegenerateSite);
        }
        Ok(Self {
            normal: site / len,
            offset: 0.5 * len,
        })
    }

    #[inline]
    pub fn signed_distance(&self, p: DVec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// The closure of the complement.
    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// Perpendicular bisector between the origin and `site`, oriented to contain the origin.
pub fn bisector(site: DVec3) -> Result<HalfSpace, GeometryError> {
    HalfSpace::bisector(site)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    In,
    On,
    Out,
}

impl Side {
    #[inline]
    fn of(d: f64) -> Self {
        if d > ON_PLANE_EPS {
            Side::Out
        } else if d < -ON_PLANE_EPS {
            Side::In
        } else {
            Side::On
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FaceInfo {
    plane: HalfSpace,
    start: usize,
    len: usize,
    /// Face inherited from the seed box rather than produced by a cut.
    seed: bool,
}

/// Borrowed view of one face.
#[derive(Debug, Clone, Copy)]
pub struct FaceRef<'a> {
    pub plane: HalfSpace,
    pub vertices: &'a [usize],
    pub is_seed: bool,
}

/// Bounded convex polytope with a distinguished interior generator point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolytope {
    vertices: Vec<DVec3>,
    faces: Vec<FaceInfo>,
    indices: Vec<usize>,
    generator: DVec3,
}

/// Measured features of a cell after coplanar faces have been merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeasures {
    pub volume: f64,
    pub surface_area: f64,
    pub faces: usize,
    pub vertices: usize,
}

enum Cut {
    Unchanged,
    Empty,
    Clipped(ConvexPolytope),
}

/// Axis-aligned cube `[-radius, radius]^3` with the generator at the origin.
pub fn initial_cell(radius: f64) -> Result<ConvexPolytope, GeometryError> {
    ConvexPolytope::initial_cell(radius)
}

/// `cell ∩ h`; see [`ConvexPolytope::clip`].
pub fn clip(cell: &ConvexPolytope, h: &HalfSpace) -> Result<ConvexPolytope, GeometryError> {
    cell.clip(h)
}

pub fn measure(cell: &ConvexPolytope) -> CellMeasures {
    cell.measure()
}

impl ConvexPolytope {
    pub fn initial_cell(radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Self::cuboid(DVec3::splat(-radius), DVec3::splat(radius))
    }

    /// Box `[min, max]` with the generator at its center.
    pub fn cuboid(min: DVec3, max: DVec3) -> Result<Self, GeometryError> {
        let extent = max - min;
        if !(extent.min_element() > 0.0 && extent.is_finite()) {
            return Err(GeometryError::NonPositiveRadius(extent.min_element()));
        }
        let corner = |i: usize| {
            DVec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices: Vec<DVec3> = (0..8).map(corner).collect();
        let cycles: [([usize; 4], DVec3, f64); 6] = [
            ([0, 4, 6, 2], DVec3::NEG_X, -min.x),
            ([1, 3, 7, 5], DVec3::X, max.x),
            ([0, 1, 5, 4], DVec3::NEG_Y, -min.y),
            ([2, 6, 7, 3], DVec3::Y, max.y),
            ([0, 2, 3, 1], DVec3::NEG_Z, -min.z),
            ([4, 5, 7, 6], DVec3::Z, max.z),
        ];
        let mut faces = Vec::with_capacity(6);
        let mut indices = Vec::with_capacity(24);
        for (cycle, normal, offset) in cycles {
            faces.push(FaceInfo {
                plane: HalfSpace { normal, offset },
                start: indices.len(),
                len: 4,
                seed: true,
            });
            indices.extend_from_slice(&cycle);
        }
        Ok(Self {
            vertices,
            faces,
            indices,
            generator: 0.5 * (min + max),
        })
    }

    /// Replaces the generator; it must lie strictly inside every face plane.
    pub fn with_generator(mut self, generator: DVec3) -> Result<Self, GeometryError> {
        for f in &self.faces {
            let d = f.plane.signed_distance(generator);
            if d > -ON_PLANE_EPS {
                return Err(GeometryError::GeneratorOutside(d));
            }
        }
        self.generator = generator;
        Ok(self)
    }

    pub fn vertices(&self) -> &[DVec3] {
        &self.vertices
    }

    pub fn generator(&self) -> DVec3 {
        self.generator
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Number of edges, half the total length of the face cycles.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn face(&self, i: usize) -> FaceRef<'_> {
        let f = &self.faces[i];
        FaceRef {
            plane: f.plane,
            vertices: &self.indices[f.start..f.start + f.len],
            is_seed: f.seed,
        }
    }

    pub fn faces(&self) -> impl ExactSizeIterator<Item = FaceRef<'_>> + '_ {
        (0..self.faces.len()).map(move |i| self.face(i))
    }

    /// `V - E + F` of the stored boundary representation.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.num_edges() as i64 + self.faces.len() as i64
    }

    /// Largest distance from the generator to a vertex.
    pub fn circumradius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.distance_squared(self.generator))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Whether any face of the seed box survives.
    pub fn has_seed_faces(&self) -> bool {
        self.faces.iter().any(|f| f.seed)
    }

    /// `self ∩ h`. The generator must strictly satisfy `h`.
    pub fn clip(&self, h: &HalfSpace) -> Result<Self, GeometryError> {
        let d = h.signed_distance(self.generator);
        if d > -ON_PLANE_EPS {
            return Err(GeometryError::GeneratorOutside(d));
        }
        Ok(match self.cut(h) {
            Cut::Unchanged => self.clone(),
            Cut::Clipped(p) => p,
            // unreachable with the generator strictly inside
            Cut::Empty => return Err(GeometryError::GeneratorOutside(d)),
        })
    }

    /// In-place [`clip`](Self::clip); returns whether the plane cut the cell.
    pub fn clip_in_place(&mut self, h: &HalfSpace) -> Result<bool, GeometryError> {
        let d = h.signed_distance(self.generator);
        if d > -ON_PLANE_EPS {
            return Err(GeometryError::GeneratorOutside(d));
        }
        match self.cut(h) {
            Cut::Unchanged => Ok(false),
            Cut::Clipped(p) => {
                *self = p;
                Ok(true)
            }
            Cut::Empty => Err(GeometryError::GeneratorOutside(d)),
        }
    }

    /// Splits the cell along the plane of `h` into the part inside `h` and the
    /// part inside its complement. Each piece gets its vertex centroid as generator.
    pub fn split(&self, h: &HalfSpace) -> (Option<Self>, Option<Self>) {
        let piece = |hs: &HalfSpace| match self.cut(hs) {
            Cut::Unchanged => Some(self.clone()),
            Cut::Empty => None,
            Cut::Clipped(mut p) => {
                p.generator = p.vertex_centroid();
                Some(p)
            }
        };
        (piece(h), piece(&h.flipped()))
    }

    fn vertex_centroid(&self) -> DVec3 {
        self.vertices.iter().copied().sum::<DVec3>() / self.vertices.len() as f64
    }

    fn cut(&self, h: &HalfSpace) -> Cut {
        if !self
            .vertices
            .iter()
            .any(|&v| h.signed_distance(v) > ON_PLANE_EPS)
        {
            return Cut::Unchanged;
        }
        let dist: Vec<f64> = self.vertices.iter().map(|&v| h.signed_distance(v)).collect();
        let side: Vec<Side> = dist.iter().map(|&d| Side::of(d)).collect();
        if !side.contains(&Side::In) {
            return Cut::Empty;
        }

        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::with_capacity(self.vertices.len() + 8);
        for (i, &v) in self.vertices.iter().enumerate() {
            if side[i] != Side::Out {
                remap[i] = vertices.len();
                vertices.push(v);
            }
        }

        // (lo, hi, new index) for every cut edge, shared by its two faces
        let mut crossings: Vec<(usize, usize, usize)> = Vec::with_capacity(16);
        let mut crossing = |vertices: &mut Vec<DVec3>, i: usize, j: usize| -> usize {
            let key = (i.min(j), i.max(j));
            if let Some(&(_, _, idx)) = crossings.iter().find(|c| (c.0, c.1) == key) {
                return idx;
            }
            let (p, q) = if side[i] == Side::In { (i, j) } else { (j, i) };
            let t = dist[p] / (dist[p] - dist[q]);
            let idx = vertices.len();
            vertices.push(self.vertices[p].lerp(self.vertices[q], t));
            crossings.push((key.0, key.1, idx));
            idx
        };

        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut indices = Vec::with_capacity(self.indices.len() + 16);
        // directed cap edges: (from, to) in new vertex indices
        let mut cap: Vec<(usize, usize)> = Vec::with_capacity(16);
        let mut cycle: Vec<usize> = Vec::with_capacity(32);

        for f in &self.faces {
            let cyc = &self.indices[f.start..f.start + f.len];
            let m = cyc.len();
            let any_out = cyc.iter().any(|&v| side[v] == Side::Out);
            if !any_out {
                faces.push(FaceInfo {
                    start: indices.len(),
                    ..*f
                });
                indices.extend(cyc.iter().map(|&v| remap[v]));
                continue;
            }
            let Some(start) =
                (0..m).find(|&j| side[cyc[j]] != Side::Out && side[cyc[(j + m - 1) % m]] == Side::Out)
            else {
                continue; // entirely outside
            };

            cycle.clear();
            let mut gap: Option<usize> = None;
            for step in 0..m {
                let i = cyc[(start + step) % m];
                let j = cyc[(start + step + 1) % m];
                if side[i] != Side::Out {
                    let vi = remap[i];
                    if let Some(a) = gap.take() {
                        cap.push((vi, a));
                    }
                    cycle.push(vi);
                    if side[j] == Side::Out {
                        let a = if side[i] == Side::In {
                            let x = crossing(&mut vertices, i, j);
                            cycle.push(x);
                            x
                        } else {
                            vi
                        };
                        gap = Some(a);
                    }
                } else if side[j] == Side::In {
                    let y = crossing(&mut vertices, i, j);
                    cycle.push(y);
                    if let Some(a) = gap.take() {
                        cap.push((y, a));
                    }
                }
                // Out -> On: the on-plane vertex closes the gap on the next step.
            }
            if let Some(a) = gap.take() {
                cap.push((cycle[0], a));
            }
            if cycle.len() >= 3 {
                faces.push(FaceInfo {
                    plane: f.plane,
                    start: indices.len(),
                    len: cycle.len(),
                    seed: f.seed,
                });
                indices.extend_from_slice(&cycle);
            }
        }

        cap.retain(|&(from, to)| from != to);
        if let Some(cap_cycle) = chain_cap(&cap).or_else(|| sort_cap(&cap, &vertices, h)) {
            faces.push(FaceInfo {
                plane: *h,
                start: indices.len(),
                len: cap_cycle.len(),
                seed: false,
            });
            indices.extend_from_slice(&cap_cycle);
        }

        let mut out = ConvexPolytope {
            vertices,
            faces,
            indices,
            generator: self.generator,
        };
        out.drop_unreferenced();
        Cut::Clipped(out)
    }

    fn drop_unreferenced(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for &i in &self.indices {
            used[i] = true;
        }
        if used.iter().all(|&u| u) {
            return;
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::with_capacity(self.vertices.len());
        for (i, &v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = kept.len();
                kept.push(v);
            }
        }
        for i in &mut self.indices {
            *i = remap[*i];
        }
        self.vertices = kept;
    }

    /// Volume, surface area and the face/vertex counts after merging coplanar faces.
    pub fn measure(&self) -> CellMeasures {
        let g = self.generator;
        let mut volume = 0.0;
        let mut area = 0.0;
        for face in self.faces() {
            let pts = face.vertices;
            let c = pts.iter().map(|&i| self.vertices[i]).sum::<DVec3>() / pts.len() as f64;
            let mut cross_sum = DVec3::ZERO;
            for k in 0..pts.len() {
                let p = self.vertices[pts[k]];
                let q = self.vertices[pts[(k + 1) % pts.len()]];
                cross_sum += (p - c).cross(q - c);
                volume += (c - g).dot((p - g).cross(q - g));
            }
            area += 0.5 * cross_sum.length();
        }

        let groups = self.coplanar_groups();
        let n_groups = groups.iter().copied().max().map_or(0, |m| m + 1);
        let vertices = if n_groups == self.faces.len() {
            self.vertices.len()
        } else {
            // a vertex survives the merge only if it still touches three planes
            let mut incident: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
            for (fi, face) in self.faces().enumerate() {
                for &v in face.vertices {
                    if !incident[v].contains(&groups[fi]) {
                        incident[v].push(groups[fi]);
                    }
                }
            }
            incident.iter().filter(|g| g.len() >= 3).count()
        };

        CellMeasures {
            volume: volume / 6.0,
            surface_area: area,
            faces: n_groups,
            vertices,
        }
    }

    /// Group id per face; faces with (nearly) identical outward normals share an id.
    fn coplanar_groups(&self) -> Vec<usize> {
        let mut reps: Vec<DVec3> = Vec::with_capacity(self.faces.len());
        self.faces
            .iter()
            .map(|f| {
                let n = f.plane.normal;
                match reps
                    .iter()
                    .position(|r| r.dot(n) > 0.0 && r.cross(n).length() < COPLANAR_ANGLE_TOL)
                {
                    Some(i) => i,
                    None => {
                        reps.push(n);
                        reps.len() - 1
                    }
                }
            })
            .collect()
    }

    /// Checks every structural invariant of the boundary representation.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::Invalid(msg));
        if self.faces.len() < 4 {
            return bad(format!("only {} faces", self.faces.len()));
        }
        if self.euler_characteristic() != 2 {
            return bad(format!(
                "V - E + F = {} - {} + {} != 2",
                self.vertices.len(),
                self.num_edges(),
                self.faces.len()
            ));
        }
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(self.indices.len());
        for (fi, face) in self.faces().enumerate() {
            let pts = face.vertices;
            if pts.len() < 3 {
                return bad(format!("face {fi} has {} vertices", pts.len()));
            }
            let scale = 1.0 + face.plane.offset.abs();
            for &v in pts {
                let d = face.plane.signed_distance(self.vertices[v]);
                if d.abs() > VALIDATION_TOL * scale {
                    return bad(format!("face {fi} is not planar (vertex {v} off by {d:e})"));
                }
            }
            let mut newell = DVec3::ZERO;
            for k in 0..pts.len() {
                let p = self.vertices[pts[k]];
                let q = self.vertices[pts[(k + 1) % pts.len()]];
                newell += p.cross(q);
                directed.push((pts[k], pts[(k + 1) % pts.len()]));
            }
            if newell.dot(face.plane.normal) <= 0.0 {
                return bad(format!("face {fi} is not counterclockwise from outside"));
            }
            for (vi, &v) in self.vertices.iter().enumerate() {
                let d = face.plane.signed_distance(v);
                if d > VALIDATION_TOL * scale {
                    return bad(format!("vertex {vi} violates face {fi} by {d:e}"));
                }
            }
            if face.plane.signed_distance(self.generator) >= 0.0 {
                return bad(format!("generator is not strictly inside face {fi}"));
            }
        }
        directed.sort_unstable();
        if directed.windows(2).any(|w| w[0] == w[1]) {
            return bad("a directed edge is used twice".into());
        }
        if directed
            .iter()
            .any(|&(a, b)| directed.binary_search(&(b, a)).is_err())
        {
            return bad("an edge has no opposite half-edge".into());
        }
        Ok(())
    }
}

/// Links directed cap edges into a single cycle, if they form one.
fn chain_cap(edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    if edges.len() < 3 {
        return None;
    }
    let start = edges[0].0;
    let mut cycle = Vec::with_capacity(edges.len());
    cycle.push(start);
    let mut cur = edges[0].1;
    while cur != start {
        if cycle.len() >= edges.len() {
            return None;
        }
        cycle.push(cur);
        let from = cur;
        let mut next = edges.iter().filter(|e| e.0 == from).map(|e| e.1);
        cur = next.next()?;
        if next.next().is_some() {
            return None;
        }
    }
    (cycle.len() == edges.len()).then_some(cycle)
}

/// Fallback for near-degenerate cuts: order the cap vertices by angle in the plane.
fn sort_cap(edges: &[(usize, usize)], vertices: &[DVec3], h: &HalfSpace) -> Option<Vec<usize>> {
    let mut ids: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 3 {
        return None;
    }
    let c = ids.iter().map(|&i| vertices[i]).sum::<DVec3>() / ids.len() as f64;
    let (u, w) = h.normal.any_orthonormal_pair();
    let mut keyed: Vec<(f64, usize)> = ids
        .iter()
        .map(|&i| {
            let r = vertices[i] - c;
            (r.dot(w).atan2(r.dot(u)), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, i)| i).collect())
}
