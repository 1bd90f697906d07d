use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use super::{Column, Dataset, Record};
use crate::error::{Error, Result};

const DATE_FMT: &str = "%Y-%m-%d";

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv_to(dataset, &mut w).map_err(|e| match e {
        Error::Csv(c) if c.is_io_error() => Error::io(path, std::io::Error::other(c.to_string())),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(out);
    w.write_record(Column::ALL.iter().map(|c| c.name()))?;
    for r in &dataset.rows {
        w.write_record(row_cells(r))?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn fmt_bool(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

fn row_cells(r: &Record) -> [String; 19] {
    [
        r.id.to_string(),
        r.age.to_string(),
        r.education.to_string(),
        r.employment_status.to_string(),
        r.job.clone(),
        r.monthly_income.to_string(),
        r.phone_model.clone(),
        r.phone_purchase_date.format(DATE_FMT).to_string(),
        fmt_bool(r.owns_car),
        r.car_brand.clone().unwrap_or_default(),
        r.car_purchase_date
            .map(|d| d.format(DATE_FMT).to_string())
            .unwrap_or_default(),
        r.home_district.clone(),
        fmt_bool(r.owns_home),
        r.monthly_rent.to_string(),
        fmt_bool(r.owns_credit_card),
        r.monthly_subscriptions.to_string(),
        r.online_shopping_frequency.to_string(),
        fmt_bool(r.social_media_active),
        r.delinquency_fl.to_string(),
    ]
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }
    for col in Column::ALL {
        if !header.iter().any(|h| h == col.name()) {
            return Err(Error::Schema(format!("missing column `{}`", col.name())));
        }
    }
    for (i, h) in header.iter().enumerate() {
        match Column::from_name(h) {
            Some(c) if Column::ALL[i] == c => {}
            Some(_) => {
                return Err(Error::Schema(format!(
                    "column `{h}` at position {i}, expected `{}`",
                    Column::ALL[i].name()
                )))
            }
            None => return Err(Error::Schema(format!("unknown column `{h}`"))),
        }
    }
    if header.len() != Column::ALL.len() {
        return Err(Error::Schema(format!(
            "expected {} columns, found {}",
            Column::ALL.len(),
            header.len()
        )));
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        rows.push(parse_row(row, &rec)?);
    }
    Dataset::new(rows, None)
}

struct Cells<'a> {
    row: usize,
    rec: &'a csv::StringRecord,
}

impl Cells<'_> {
    fn raw(&self, c: Column) -> &str {
        &self.rec[c as usize]
    }

    fn err(&self, c: Column, message: impl Into<String>) -> Error {
        Error::Parse {
            row: self.row,
            column: c.name().into(),
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, c: Column) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(c)
            .parse::<T>()
            .map_err(|e| self.err(c, format!("`{}`: {e}", self.raw(c))))
    }

    fn text(&self, c: Column) -> Result<String> {
        let s = self.raw(c);
        if s.is_empty() {
            return Err(self.err(c, "empty value"));
        }
        Ok(s.to_string())
    }

    fn boolean(&self, c: Column) -> Result<bool> {
        match self.raw(c) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.err(c, format!("expected true/false, got `{other}`"))),
        }
    }

    fn date(&self, c: Column) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(self.raw(c), DATE_FMT)
            .map_err(|e| self.err(c, format!("`{}`: {e}", self.raw(c))))
    }

    fn opt_date(&self, c: Column) -> Result<Option<NaiveDate>> {
        if self.raw(c).is_empty() {
            Ok(None)
        } else {
            self.date(c).map(Some)
        }
    }

    fn amount(&self, c: Column) -> Result<f64> {
        let v: f64 = self.parse(c)?;
        if !v.is_finite() {
            return Err(self.err(c, "non-finite number"));
        }
        Ok(v)
    }
}

fn parse_row(row: usize, rec: &csv::StringRecord) -> Result<Record> {
    let c = Cells { row, rec };
    let car_brand = match c.raw(Column::CarBrand) {
        "" => None,
        s => Some(s.to_string()),
    };
    let label: u8 = c.parse(Column::DelinquencyFl)?;
    if label > 1 {
        return Err(c.err(Column::DelinquencyFl, format!("expected 0/1, got {label}")));
    }
    Ok(Record {
        id: c.parse(Column::Id)?,
        age: c.parse(Column::Age)?,
        education: c.parse(Column::Education)?,
        employment_status: c.parse(Column::EmploymentStatus)?,
        job: c.text(Column::Job)?,
        monthly_income: c.amount(Column::MonthlyIncome)?,
        phone_model: c.text(Column::PhoneModel)?,
        phone_purchase_date: c.date(Column::PhonePurchaseDate)?,
        owns_car: c.boolean(Column::OwnsCar)?,
        car_brand,
        car_purchase_date: c.opt_date(Column::CarPurchaseDate)?,
        home_district: c.text(Column::HomeDistrict)?,
        owns_home: c.boolean(Column::OwnsHome)?,
        monthly_rent: c.amount(Column::MonthlyRent)?,
        owns_credit_card: c.boolean(Column::OwnsCreditCard)?,
        monthly_subscriptions: c.amount(Column::MonthlySubscriptions)?,
        online_shopping_frequency: c.parse(Column::OnlineShoppingFrequency)?,
        social_media_active: c.boolean(Column::SocialMediaActive)?,
        delinquency_fl: label,
    })
}
