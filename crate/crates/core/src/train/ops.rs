use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpsReport {
    pub ops_per_pass: f64,
    pub ops_per_second: f64,
    /// Needs a device area.
    pub ops_per_mm2_s: Option<f64>,
    /// Needs a power budget.
    pub ops_per_watt: Option<f64>,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("rate must be >= 0, got {rate}")));
    }
    Ok(())
}

impl OpsReport {
    fn from_pass(ops_per_pass: f64, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            ops_per_pass,
            ops_per_second: ops_per_pass * rate,
            ops_per_mm2_s: None,
            ops_per_watt: None,
        })
    }

    /// A fully connected `H·W → H·W` diffractive layer: `2·(H·W)²` operations.
    pub fn freespace(rows: usize, cols: usize, frame_rate: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        let n = (rows * cols) as f64;
        Self::from_pass(2.0 * n * n, frame_rate)
    }

    /// `2·n_in·n_out` operations per modulation cycle.
    pub fn integrated(n_inputs: usize, n_outputs: usize, rate: f64) -> Result<Self> {
        if n_inputs == 0 || n_outputs == 0 {
            return Err(Error::Config("port counts must be positive".into()));
        }
        Self::from_pass(2.0 * n_inputs as f64 * n_outputs as f64, rate)
    }

    pub fn with_area(mut self, area_mm2: f64) -> Result<Self> {
        if !(area_mm2 > 0.0 && area_mm2.is_finite()) {
            return Err(Error::Config(format!("area must be positive, got {area_mm2}")));
        }
        self.ops_per_mm2_s = Some(self.ops_per_second / area_mm2);
        Ok(self)
    }

    pub fn with_power(mut self, watts: f64) -> Result<Self> {
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(Error::Config(format!("power must be positive, got {watts}")));
        }
        self.ops_per_watt = Some(self.ops_per_second / watts);
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, unit: &str| match v {
            Some(v) => format!("{:.3} {unit}", v / 1e12),
            None => "NA".to_string(),
        };
        format!(
            "ops_per_pass = {:.4e}\nops_per_second = {:.4e}\ntops = {:.3}\ntops_per_mm2 = {}\ntops_per_watt = {}\n",
            self.ops_per_pass,
            self.ops_per_second,
            self.ops_per_second / 1e12,
            opt(self.ops_per_mm2_s, "TOPS/mm2"),
            opt(self.ops_per_watt, "TOPS/W"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig3(a: f64, b: f64) -> bool {
        let scale = 10f64.powf(b.abs().log10().floor() - 2.0);
        (a / scale).round() == (b / scale).round()
    }

    #[test]
    fn reported_throughput() {
        let fs = OpsReport::freespace(400, 400, 30.0).unwrap();
        assert!(sig3(fs.ops_per_pass, 5.12e10));
        assert!(sig3(fs.ops_per_second, 1.536e12));
        let slm = OpsReport::freespace(1920, 1152, 30.0).unwrap();
        assert!(sig3(slm.ops_per_second, 293.53e12));
        let chip = OpsReport::integrated(16, 2, 30e9)
            .unwrap()
            .with_area(0.54 * 0.2)
            .unwrap()
            .with_power(10e-3)
            .unwrap();
        assert!(sig3(chip.ops_per_second, 1.92e12));
        assert!(sig3(chip.ops_per_mm2_s.unwrap(), 17.778e12));
        assert!(sig3(chip.ops_per_watt.unwrap(), 192e12));
    }

    #[test]
    fn zero_rate_and_doubling() {
        assert_eq!(OpsReport::freespace(4, 4, 0.0).unwrap().ops_per_second, 0.0);
        let a = OpsReport::freespace(8, 8, 30.0).unwrap().ops_per_second;
        let b = OpsReport::freespace(8, 8, 60.0).unwrap().ops_per_second;
        assert_eq!(b, 2.0 * a);
        assert!(OpsReport::freespace(0, 4, 1.0).is_err());
        assert!(OpsReport::integrated(16, 2, -1.0).is_err());
    }
}
