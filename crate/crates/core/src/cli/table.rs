//! CSV tables with locale-free 12-significant-digit numbers.

/// Significant digits written for every numeric CSV field.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// `v` rounded to 12 significant digits; positional notation for exponents
/// in `[-5, 12)`, scientific otherwise. Negative zero prints as zero.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    let v = if v == 0.0 { 0.0 } else { v };
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}

pub fn format_flag(b: bool) -> String {
    if b { "true" } else { "false" }.into()
}

/// `prefix_1, …, prefix_m`
pub fn indexed(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (1..=m).map(move |i| format!("{prefix}_{i}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(header: I) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub fn numbers(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| format_number(*v))
}
