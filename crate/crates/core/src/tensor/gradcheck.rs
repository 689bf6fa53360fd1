use super::{Gradients, ParamId, ParamStore, Result, Tape, Tensor, Var};

/// `|a − n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is zero from dividing round-off by round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Central finite-difference gradient of `loss` with respect to one parameter.
pub fn central_difference<F>(store: &ParamStore, id: ParamId, step: f64, mut loss: F) -> Result<Tensor>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut probe = store.clone();
    let n = store.get(id).numel();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let orig = store.get(id).data()[j];
        probe.get_mut(id).data_mut()[j] = orig + step;
        let plus = loss(&probe)?;
        probe.get_mut(id).data_mut()[j] = orig - step;
        let minus = loss(&probe)?;
        probe.get_mut(id).data_mut()[j] = orig;
        *o = (plus - minus) / (2.0 * step);
    }
    Tensor::new(store.get(id).shape().to_vec(), out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub size: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.groups.iter().all(|g| g.max_relative_error < tolerance)
    }

    /// Compares backpropagated gradients of `build` (which records a scalar
    /// loss on a fresh tape) against central differences for every parameter.
    pub fn run<F>(store: &ParamStore, step: f64, floor: f64, build: F) -> Result<Self>
    where
        F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let loss = build(store, &mut tape)?;
        let mut grads = Gradients::new(store);
        tape.backward(loss, &mut grads)?;
        Self::compare(store, &grads, step, floor, |s| {
            let mut t = Tape::new();
            let l = build(s, &mut t)?;
            Ok(t.value(l).data()[0])
        })
    }

    /// Same as [`GradCheckReport::run`] but against caller-supplied analytic
    /// gradients; used to confirm a corrupted gradient is caught.
    pub fn compare<F>(store: &ParamStore, grads: &Gradients, step: f64, floor: f64, mut loss: F) -> Result<Self>
    where
        F: FnMut(&ParamStore) -> Result<f64>,
    {
        let mut groups = Vec::with_capacity(store.len());
        for id in store.ids() {
            let numeric = central_difference(store, id, step, &mut loss)?;
            let analytic = grads.get(id);
            let mut worst = 0.0f64;
            let mut biggest = 0.0f64;
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                worst = worst.max(relative_error(*a, *n, floor));
                biggest = biggest.max(a.abs());
            }
            groups.push(GroupError {
                name: store.name(id).to_string(),
                size: analytic.numel(),
                max_relative_error: worst,
                max_abs_gradient: biggest,
            });
        }
        Ok(GradCheckReport { groups })
    }
}
