use crate::error::Result;

/// A fitted binary classifier over rows with optional feature values.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    /// Probability of the positive class.
    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64>;

    fn predict_many(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        (**self).predict_proba(row)
    }
}
