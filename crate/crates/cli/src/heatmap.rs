//! Output grids of a fitted candidate over two inputs: the whole model, its
//! first-layer function, or one second-layer function.

use std::io::Write;
use std::path::Path;

use interpfn_core::data::Dataset;
use interpfn_core::expr::CandidateModel;
use serde::Serialize;

use crate::error::CliError;
use crate::ingest::fmt_num;

pub const VIEWS: [&str; 4] = ["model", "f1", "f2_1", "f2_2"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + (self.max - self.min) * i as f64 / last })
            .collect()
    }
}

/// `cells[iy][ix]` is the output at `(x.values()[ix], y.values()[iy])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapGrid {
    pub view: String,
    pub x: Axis,
    pub y: Axis,
    pub cells: Vec<Vec<f64>>,
}

impl HeatmapGrid {
    pub fn write<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let corner = format!("{}\\{}", self.y.name, self.x.name);
        w.write_record(std::iter::once(corner).chain(self.x.values().into_iter().map(fmt_num)))?;
        for (yv, row) in self.y.values().into_iter().zip(&self.cells) {
            w.write_record(std::iter::once(fmt_num(yv)).chain(row.iter().map(|v| fmt_num(*v))))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), CliError> {
        let f = std::fs::File::create(path)
            .map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
        self.write(std::io::BufWriter::new(f))
            .map_err(|e| CliError::Output { path: path.display().to_string(), source: e.into() })
    }
}

fn observed_range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn domain_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("heatmap evaluation failed: {e}"))
}

/// Covariate indices spanning the grid for the `model` and `f2_*` views.
fn covariate_axes(model: &CandidateModel, data: &Dataset, axes: &[String]) -> Result<(usize, usize), CliError> {
    match axes {
        [] => match model.covariate_subset.as_slice() {
            [a, b, ..] => Ok((*a, *b)),
            _ => Err(CliError::Config("heatmaps need a model with at least two covariates".into())),
        },
        [a, b] => {
            let find = |n: &String| {
                data.feature_index(n)
                    .ok_or_else(|| CliError::Config(format!("heatmap axis {n:?} is not a dataset column")))
            };
            Ok((find(a)?, find(b)?))
        }
        _ => Err(CliError::Config(format!("heatmap.axes needs exactly two names, got {}", axes.len()))),
    }
}

fn grid_over(
    view: &str,
    x: Axis,
    y: Axis,
    mut f: impl FnMut(f64, f64) -> Result<f64, CliError>,
) -> Result<HeatmapGrid, CliError> {
    let xs = x.values();
    let cells = y
        .values()
        .into_iter()
        .map(|yv| xs.iter().map(|&xv| f(xv, yv)).collect::<Result<Vec<f64>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HeatmapGrid { view: view.to_string(), x, y, cells })
}

/// Grid of one view. Axis ranges are the observed ranges in `data`; for the
/// `f1` view they are the observed ranges of the two second-layer outputs.
pub fn emit_heatmap(
    model: &CandidateModel,
    data: &Dataset,
    view: &str,
    steps: usize,
    axes: &[String],
) -> Result<HeatmapGrid, CliError> {
    if steps < 2 {
        return Err(CliError::Config("heatmap steps must be at least 2".into()));
    }
    if data.is_empty() {
        return Err(CliError::Data("heatmap needs a nonempty dataset".into()));
    }
    let means: Vec<f64> =
        (0..data.n_features()).map(|j| data.column(j).iter().sum::<f64>() / data.len() as f64).collect();
    let covariate_grid = |view: &str, eval: &dyn Fn(&[f64]) -> Result<f64, CliError>| {
        let (ia, ib) = covariate_axes(model, data, axes)?;
        let axis = |j: usize| {
            let (min, max) = observed_range(data.column(j).into_iter());
            Axis { name: data.feature_names[j].clone(), min, max, steps }
        };
        let mut x = means.clone();
        grid_over(view, axis(ia), axis(ib), |a, b| {
            x[ia] = a;
            x[ib] = b;
            eval(&x)
        })
    };
    match view {
        "model" => covariate_grid(view, &|x| {
            model.evaluate(x).map(|o| *o.last().unwrap()).map_err(domain_err)
        }),
        "f2_1" | "f2_2" => {
            let j = if view == "f2_1" { 0 } else { 1 };
            if j >= model.second_layer.len() {
                return Err(CliError::Config(format!("model has no second-layer slot for view {view}")));
            }
            covariate_grid(view, &|x| model.second_layer_value(j, x).map_err(domain_err))
        }
        "f1" => {
            if model.second_layer.len() != 2 {
                return Err(CliError::Config("the f1 view needs exactly two second-layer slots".into()));
            }
            let inner = |j: usize| -> Result<Axis, CliError> {
                let vals = (0..data.len())
                    .map(|i| model.second_layer_value(j, data.x(i)).map_err(domain_err))
                    .collect::<Result<Vec<f64>, _>>()?;
                let (min, max) = observed_range(vals.into_iter());
                Ok(Axis { name: format!("f2_{}", j + 1), min, max, steps })
            };
            grid_over(view, inner(0)?, inner(1)?, |a, b| model.first_layer_value(&[a, b]).map_err(domain_err))
        }
        other => Err(CliError::Config(format!("unknown heatmap view {other:?}; expected one of {VIEWS:?}"))),
    }
}
