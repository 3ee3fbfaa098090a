//! Effective-tensor tables: one row per field with complex entries split
//! into (re, im) column pairs.

use nce_core::linalg::Mat2;
use num_complex::Complex64;

use crate::CliError;

pub const TENSOR_HEADER: &str = "setting,seed,source,status,xx_re,xx_im,xy_re,xy_im,yx_re,yx_im,yy_re,yy_im,message";

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRow {
    pub setting: Option<usize>,
    pub seed: Option<u64>,
    pub source: String,
    pub result: Result<Mat2, String>,
}

pub fn tensor_csv(rows: &[TensorRow]) -> String {
    let mut s = String::from(TENSOR_HEADER);
    s.push('\n');
    for r in rows {
        let setting = r.setting.map(|v| v.to_string()).unwrap_or_default();
        let seed = r.seed.map(|v| v.to_string()).unwrap_or_default();
        match &r.result {
            Ok(m) => {
                let e = m.entries();
                s.push_str(&format!("{setting},{seed},{},ok", r.source));
                for z in e {
                    s.push_str(&format!(",{},{}", z.re, z.im));
                }
                s.push_str(",\n");
            }
            Err(msg) => {
                let clean: String = msg.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
                s.push_str(&format!("{setting},{seed},{},error,,,,,,,,,{clean}\n", r.source));
            }
        }
    }
    s
}

pub fn parse_tensor_csv(text: &str) -> Result<Vec<TensorRow>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(TENSOR_HEADER) {
        return Err(CliError::Param("tensor table has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(CliError::Param(format!("tensor row {line:?} needs 13 columns")));
            }
            let bad = || CliError::Param(format!("malformed tensor row {line:?}"));
            let setting = if f[0].is_empty() { None } else { Some(f[0].parse().map_err(|_| bad())?) };
            let seed = if f[1].is_empty() { None } else { Some(f[1].parse().map_err(|_| bad())?) };
            let result = match f[3] {
                "ok" => {
                    let v: Vec<f64> = f[4..12].iter().map(|t| t.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
                    let z = |i: usize| Complex64::new(v[2 * i], v[2 * i + 1]);
                    Ok(Mat2::from_entries([z(0), z(1), z(2), z(3)]))
                }
                "error" => Err(f[12].to_string()),
                _ => return Err(bad()),
            };
            Ok(TensorRow { setting, seed, source: f[2].to_string(), result })
        })
        .collect()
}
