/// Evaluable action-value function over a finite action set.
pub trait QFunction: Send + Sync {
    fn n_actions(&self) -> usize;

    fn value(&self, state: &[f64], action: usize) -> f64;

    fn values(&self, state: &[f64]) -> Vec<f64> {
        (0..self.n_actions()).map(|a| self.value(state, a)).collect()
    }

    /// `max_a Q(s, a)`.
    fn max_value(&self, state: &[f64]) -> f64 {
        self.values(state).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    fn greedy_action(&self, state: &[f64]) -> usize {
        argmax(&self.values(state))
    }

    /// `Q(s, action)` for every row; equal to calling `value` row by row.
    fn value_rows(&self, rows: &[&[f64]], action: usize) -> Vec<f64> {
        rows.iter().map(|r| self.value(r, action)).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `Q ≡ 0`, the initial iterate of fitted Q-iteration.
#[derive(Debug, Clone, Copy)]
pub struct ZeroQ {
    pub n_actions: usize,
}

impl QFunction for ZeroQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn value(&self, _state: &[f64], _action: usize) -> f64 {
        0.0
    }
}

impl<Q: QFunction + ?Sized> QFunction for &Q {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn value(&self, state: &[f64], action: usize) -> f64 {
        (**self).value(state, action)
    }

    fn values(&self, state: &[f64]) -> Vec<f64> {
        (**self).values(state)
    }

    fn value_rows(&self, rows: &[&[f64]], action: usize) -> Vec<f64> {
        (**self).value_rows(rows, action)
    }
}

impl<Q: QFunction + ?Sized> QFunction for std::sync::Arc<Q> {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn value(&self, state: &[f64], action: usize) -> f64 {
        (**self).value(state, action)
    }

    fn values(&self, state: &[f64]) -> Vec<f64> {
        (**self).values(state)
    }

    fn value_rows(&self, rows: &[&[f64]], action: usize) -> Vec<f64> {
        (**self).value_rows(rows, action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[-3.0]), 0);
    }
}
