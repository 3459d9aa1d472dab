//! Sampled time series and CSV output.

use std::io::Write;

use crate::error::Result;

/// Version of the CSV column layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One sampled row. Per-parameter vectors have one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub tau: [f64; 2],
    /// Filtered output: one entry (power balance) or two (classical).
    pub y: Vec<f64>,
    /// `max |y - Psi theta|` over rows.
    pub lre_residual: f64,
    pub delta: f64,
    pub mixed: Vec<f64>,
    pub mix_residual: Vec<f64>,
    pub y_new: Vec<f64>,
    pub phi11: Vec<f64>,
    pub phi21: Vec<f64>,
    pub det_phi: Vec<f64>,
    pub int_u3: Vec<f64>,
    /// Estimate of the selected chain.
    pub theta_hat: Vec<f64>,
    pub theta_err: Vec<f64>,
    pub theta_grad: Vec<f64>,
    pub theta_drem: Vec<f64>,
    pub theta_newlre: Vec<f64>,
    pub energy: f64,
    pub work: f64,
    pub dissipated: f64,
    pub int_delta_sq: f64,
    pub int_abs_alpha_delta: f64,
    pub int_phi21_sq: Vec<f64>,
    pub q_err: Option<[f64; 2]>,
    pub lyapunov_residual: Option<f64>,
    /// Certainty-equivalent inertia positive definite (closed loop only).
    pub mhat_pd: Option<bool>,
}

/// Column names for `params` estimated parameters.
pub fn header(params: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "q1", "q2", "qd1", "qd2", "tau1", "tau2", "y1", "y2", "lre_residual", "delta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let per = |h: &mut Vec<String>, name: &str| h.extend((1..=params).map(|i| format!("{name}_{i}")));
    for name in [
        "ymix", "mix_residual", "y_new", "phi11", "phi21", "det_phi", "int_u3", "theta_hat", "theta_err",
        "theta_grad", "theta_drem", "theta_newlre",
    ] {
        per(&mut h, name);
    }
    h.extend(["energy", "work", "dissipated", "int_delta_sq", "int_abs_alpha_delta"].map(String::from));
    per(&mut h, "int_phi21_sq");
    h.extend(["qerr1", "qerr2", "lyapunov_residual", "mhat_pd"].map(String::from));
    h
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl Sample {
    pub fn fields(&self) -> Vec<String> {
        let mut f: Vec<String> = vec![num(self.t)];
        f.extend(self.q.iter().chain(&self.qd).chain(&self.tau).map(|v| num(*v)));
        f.push(num(self.y[0]));
        f.push(self.y.get(1).map_or(String::new(), |v| num(*v)));
        f.push(num(self.lre_residual));
        f.push(num(self.delta));
        for v in [
            &self.mixed,
            &self.mix_residual,
            &self.y_new,
            &self.phi11,
            &self.phi21,
            &self.det_phi,
            &self.int_u3,
            &self.theta_hat,
            &self.theta_err,
            &self.theta_grad,
            &self.theta_drem,
            &self.theta_newlre,
        ] {
            f.extend(v.iter().map(|x| num(*x)));
        }
        f.extend([self.energy, self.work, self.dissipated, self.int_delta_sq, self.int_abs_alpha_delta].map(num));
        f.extend(self.int_phi21_sq.iter().map(|x| num(*x)));
        match self.q_err {
            Some(e) => f.extend(e.map(num)),
            None => f.extend([String::new(), String::new()]),
        }
        f.push(self.lyapunov_residual.map_or(String::new(), num));
        f.push(self.mhat_pd.map_or(String::new(), |b| u8::from(b).to_string()));
        f
    }
}

/// Writes `samples` as CSV with a header row.
pub fn write_csv<W: Write>(out: W, params: usize, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(params))?;
    for s in samples {
        w.write_record(s.fields())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: usize) -> Sample {
        let v = vec![0.5; p];
        Sample {
            t: 0.1,
            q: [1.0, 2.0],
            qd: [0.0, -0.0],
            tau: [1.0 / 3.0, 3.0],
            y: vec![1e-20],
            lre_residual: 0.0,
            delta: 2.0,
            mixed: v.clone(),
            mix_residual: v.clone(),
            y_new: v.clone(),
            phi11: v.clone(),
            phi21: v.clone(),
            det_phi: v.clone(),
            int_u3: v.clone(),
            theta_hat: v.clone(),
            theta_err: v.clone(),
            theta_grad: v.clone(),
            theta_drem: v.clone(),
            theta_newlre: v.clone(),
            energy: 1.0,
            work: 0.0,
            dissipated: 0.0,
            int_delta_sq: 0.0,
            int_abs_alpha_delta: 0.0,
            int_phi21_sq: v,
            q_err: None,
            lyapunov_residual: None,
            mhat_pd: Some(false),
        }
    }

    #[test]
    fn schema_is_pinned() {
        let h = header(5);
        assert_eq!(SCHEMA_VERSION, 1);
        assert_eq!(h.len(), 11 + 12 * 5 + 5 + 5 + 4);
        assert_eq!(&h[..11], &["t", "q1", "q2", "qd1", "qd2", "tau1", "tau2", "y1", "y2", "lre_residual", "delta"]);
        assert_eq!(h[11], "ymix_1");
        assert_eq!(h[h.len() - 4..], ["qerr1", "qerr2", "lyapunov_residual", "mhat_pd"]);
    }

    #[test]
    fn rows_match_header_and_round_trip() {
        let s = sample(5);
        assert_eq!(s.fields().len(), header(5).len());
        let mut buf = Vec::new();
        write_csv(&mut buf, 5, std::slice::from_ref(&s)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[5].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(cols[7].parse::<f64>().unwrap(), 1e-20);
        assert_eq!(cols[8], "");
        assert_eq!(*cols.last().unwrap(), "0");
    }
}
