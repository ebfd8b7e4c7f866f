use super::PpoError;

/// Generalized advantage estimates and value targets for one contiguous,
/// time-ordered stream.
///
/// `bootstrap` is the value of the state following the last transition and
/// is ignored when that transition is terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PpoError::LengthMismatch {
            rewards: n,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to zero mean and unit variance. Constant inputs are
/// only centered.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
    for x in xs {
        *x = (*x - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[true], 0.0, 0.99, 0.95).unwrap();
        assert_eq!((a[0], r[0]), (1.0, 1.0));
    }

    #[test]
    fn two_step_hand_example() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.5, 0.5], &[false, false], 0.5, 0.99, 0.95).unwrap();
        assert!((a[1] - 0.995).abs() < 1e-12);
        assert!((a[0] - (0.995 + 0.9405 * 0.995)).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (a, _) = compute_gae(&r, &v, &[false, true, false], 0.7, 0.9, 0.0).unwrap();
        assert!((a[0] - (0.5 + 0.9 * 0.2 - 0.1)).abs() < 1e-12);
        assert!((a[1] - (-1.0 - 0.2)).abs() < 1e-12);
        assert!((a[2] - (2.0 + 0.9 * 0.7 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization_moments() {
        let mut xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 7.0 + 3.0).collect();
        normalize(&mut xs);
        let mean = xs.iter().sum::<f64>() / 100.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 100.0;
        assert!(mean.abs() <= 1e-6 && (var - 1.0).abs() <= 1e-6);
    }
}
