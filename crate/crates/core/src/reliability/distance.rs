use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::FeasibleRegion;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    GridSublevel,
    Singleton,
    Sampled,
}

#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Vec<Vector>,
    pub provenance: Provenance,
}

impl PointSet {
    pub fn singleton(x: Vector) -> Self {
        PointSet {
            points: vec![x],
            provenance: Provenance::Singleton,
        }
    }

    pub fn grid_sublevel(points: Vec<Vector>) -> Self {
        PointSet {
            points,
            provenance: Provenance::GridSublevel,
        }
    }

    pub fn sampled(points: Vec<Vector>) -> Self {
        PointSet {
            points,
            provenance: Provenance::Sampled,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the nearest member.
    pub fn distance_to(&self, x: &Vector) -> f64 {
        self.points
            .iter()
            .map(|b| (x - b).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    pub fn contains_point(&self, x: &Vector) -> bool {
        self.points.iter().any(|b| b == x)
    }
}

/// `Δ(A, B) = sup_{a∈A} inf_{b∈B} ‖a − b‖`; zero for empty `A`.
pub fn pessimistic_distance(a: &PointSet, b: &PointSet) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::TargetSetEmpty);
    }
    Ok(a.points.iter().map(|x| b.distance_to(x)).fold(0.0, f64::max))
}

/// Grid points with `f ≤ min_grid f + ε`.
pub fn epsilon_sublevel_set(
    f: &dyn Fn(&Vector) -> Result<f64>,
    region: &FeasibleRegion,
    eps: f64,
    grid_step: f64,
) -> Result<PointSet> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidTolerance);
    }
    let grid = region.grid(grid_step)?;
    let values: Vec<f64> = grid.iter().map(f).collect::<Result<_>>()?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PointSet::grid_sublevel(
        grid.into_iter().zip(values).filter(|(_, v)| *v <= min + eps).map(|(x, _)| x).collect(),
    ))
}
