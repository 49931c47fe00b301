use super::{DataError, Result};

pub const DEFAULT_WINDOW_WIDTH: usize = 9;

/// Input context around one profile point and the high-fidelity value there.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<f64>,
    pub target: f64,
    pub index: usize,
}

/// One window per point, centred on it, with the first and last values
/// replicated past the profile ends.
pub fn make_windows(inputs: &[f64], targets: &[f64], width: usize) -> Result<Vec<Window>> {
    if width.is_multiple_of(2) {
        return Err(DataError::InvalidWindow(width));
    }
    if inputs.len() != targets.len() {
        return Err(DataError::InvalidConfig(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let n = inputs.len();
    if n < 3 {
        return Err(DataError::ShortProfile {
            profile: "<windowed>".into(),
            points: n,
        });
    }
    let half = (width / 2) as isize;
    Ok((0..n)
        .map(|i| Window {
            values: (-half..=half)
                .map(|o| inputs[(i as isize + o).clamp(0, n as isize - 1) as usize])
                .collect(),
            target: targets[i],
            index: i,
        })
        .collect())
}
