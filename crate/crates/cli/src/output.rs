//! Plain-text records and CSV tables with locale-free, 12-significant-digit numbers.

use std::io::{self, Write};

/// Formats `v` with 12 significant digits, in fixed notation for moderate
/// magnitudes and scientific notation otherwise; trailing zeros are dropped.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.11e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format has an exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    }
}

/// Ordered `key = value` pairs of one result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    pub fields: Vec<(String, String)>,
}

impl Record {
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.fields.push((key.to_string(), value.into()));
    }

    pub fn num(&mut self, key: &str, v: f64) {
        self.push(key, num(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn text(&self) -> String {
        self.fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn table(&self, comment: &str) -> Table {
        Table {
            comment: comment.to_string(),
            header: self.fields.iter().map(|(k, _)| k.clone()).collect(),
            rows: vec![self.fields.iter().map(|(_, v)| v.clone()).collect()],
        }
    }
}

/// CSV with a leading `#` comment line documenting the columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for line in self.comment.lines() {
            writeln!(w, "# {line}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Reads a table written by [`Table::write_to`].
pub fn read_table(text: &str) -> Result<Table, String> {
    let comment: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).map(|l| l.trim_start_matches("# ")).collect();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok(Table { comment: comment.join("\n"), header, rows })
}
