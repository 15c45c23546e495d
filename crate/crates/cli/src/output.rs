//! CSV writing: `.` decimal point, 17 significant digits, LF endings.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

/// 17 significant digits in scientific notation; `NaN`/`inf`/`-inf` as is.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub type CsvWriter = csv::Writer<BufWriter<File>>;

pub fn create(dir: &Path, name: &str, header: &[&str]) -> io::Result<CsvWriter> {
    let file = File::create(dir.join(name))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

pub fn finish(mut w: CsvWriter) -> io::Result<()> {
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, 4.0, -2.5e-300, 6.02214076e23] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
        assert_eq!(num(4.0), "4.0000000000000000e0");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
    }
}
