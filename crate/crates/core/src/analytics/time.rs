use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, NaiveDateTime, Offset, TimeZone, Timelike, Utc, Weekday};
use chrono_tz::{OffsetComponents, OffsetName, Tz};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{score_category, Lexicon};

/// An IANA zone from the bundled rule snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zone(pub Tz);

impl FromStr for Zone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<Tz>()
            .map(Zone)
            .map_err(|_| Error::UnknownZone(s.to_string()))
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name())
    }
}

impl Default for Zone {
    fn default() -> Self {
        Zone(Tz::America__New_York)
    }
}

pub const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

pub fn weekday_name(w: Weekday) -> &'static str {
    match w {
        Weekday::Mon => "Mon",
        Weekday::Tue => "Tue",
        Weekday::Wed => "Wed",
        Weekday::Thu => "Thu",
        Weekday::Fri => "Fri",
        Weekday::Sat => "Sat",
        Weekday::Sun => "Sun",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalTimestamp {
    pub local: NaiveDateTime,
    pub weekday: Weekday,
    pub hour: u32,
    pub zone: String,
    pub abbreviation: String,
    pub dst: bool,
    /// Total UTC offset in seconds.
    pub offset_seconds: i32,
}

impl LocalTimestamp {
    pub fn date(&self) -> NaiveDate {
        self.local.date()
    }

    pub fn to_utc(&self) -> DateTime<Utc> {
        let off = FixedOffset::east_opt(self.offset_seconds).expect("offset within a day");
        off.from_local_datetime(&self.local)
            .single()
            .expect("fixed offsets are unambiguous")
            .with_timezone(&Utc)
    }
}

pub fn local_time(ts: DateTime<Utc>, zone: Zone) -> LocalTimestamp {
    let local = ts.with_timezone(&zone.0);
    let offset = local.offset();
    LocalTimestamp {
        local: local.naive_local(),
        weekday: local.weekday(),
        hour: local.hour(),
        zone: zone.0.name().to_string(),
        abbreviation: offset.abbreviation().unwrap_or("").to_string(),
        dst: !offset.dst_offset().is_zero(),
        offset_seconds: offset.fix().local_minus_utc(),
    }
}

pub fn to_local(ts: DateTime<Utc>, zone: &str) -> Result<LocalTimestamp> {
    Ok(local_time(ts, zone.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Month,
    Weekday,
    Hour,
    WeekdayHour,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(Granularity::Month),
            "weekday" => Ok(Granularity::Weekday),
            "hour" => Ok(Granularity::Hour),
            "weekday-hour" => Ok(Granularity::WeekdayHour),
            _ => Err(Error::invalid(format!(
                "unknown granularity {s:?} (month, weekday, hour, weekday-hour)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBucket {
    /// `YYYY-MM`, `Mon`, `15`, or `Mon-15`.
    pub key: String,
    pub total: u64,
    /// Calendar days (hour), matching weekdays (weekday, weekday-hour), or 1 (month).
    pub denominator: u64,
    pub value: f64,
}

impl TimeBucket {
    fn new(key: String, total: u64, denominator: u64) -> Self {
        let value = if denominator == 0 {
            0.0
        } else {
            total as f64 / denominator as f64
        };
        TimeBucket {
            key,
            total,
            denominator,
            value,
        }
    }
}

fn month_key(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}

/// Counts local dates of each weekday in the inclusive span.
fn weekday_days(first: NaiveDate, last: NaiveDate) -> [u64; 7] {
    let days = (last - first).num_days() + 1;
    let mut out = [days as u64 / 7; 7];
    let start = first.weekday().num_days_from_monday() as usize;
    for i in 0..(days % 7) as usize {
        out[(start + i) % 7] += 1;
    }
    out
}

/// Buckets tweet instants by local time. The averaging span runs from the
/// first to the last local date that holds a tweet.
pub fn volume_series(timestamps: &[DateTime<Utc>], granularity: Granularity, zone: Zone) -> Vec<TimeBucket> {
    let locals: Vec<LocalTimestamp> = timestamps.iter().map(|&t| local_time(t, zone)).collect();
    let span = locals
        .iter()
        .map(LocalTimestamp::date)
        .fold(None, |acc: Option<(NaiveDate, NaiveDate)>, d| match acc {
            None => Some((d, d)),
            Some((a, b)) => Some((a.min(d), b.max(d))),
        });
    let day_count = span.map_or(0, |(a, b)| (b - a).num_days() as u64 + 1);
    let by_weekday = span.map_or([0; 7], |(a, b)| weekday_days(a, b));

    match granularity {
        Granularity::Month => {
            let Some((first, last)) = span else {
                return Vec::new();
            };
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            let mut m = first.with_day(1).expect("day 1 exists");
            while m <= last {
                counts.insert(month_key(m), 0);
                m = m.checked_add_months(chrono::Months::new(1)).expect("in range");
            }
            for l in &locals {
                *counts.entry(month_key(l.date())).or_default() += 1;
            }
            counts.into_iter().map(|(k, c)| TimeBucket::new(k, c, 1)).collect()
        }
        Granularity::Weekday => {
            let mut counts = [0u64; 7];
            for l in &locals {
                counts[l.weekday.num_days_from_monday() as usize] += 1;
            }
            WEEKDAYS
                .iter()
                .enumerate()
                .map(|(i, &w)| TimeBucket::new(weekday_name(w).to_string(), counts[i], by_weekday[i]))
                .collect()
        }
        Granularity::Hour => {
            let mut counts = [0u64; 24];
            for l in &locals {
                counts[l.hour as usize] += 1;
            }
            (0..24)
                .map(|h| TimeBucket::new(format!("{h:02}"), counts[h], day_count))
                .collect()
        }
        Granularity::WeekdayHour => {
            let mut counts = [[0u64; 24]; 7];
            for l in &locals {
                counts[l.weekday.num_days_from_monday() as usize][l.hour as usize] += 1;
            }
            WEEKDAYS
                .iter()
                .enumerate()
                .flat_map(|(i, &w)| {
                    (0..24).map(move |h| {
                        TimeBucket::new(format!("{}-{h:02}", weekday_name(w)), counts[i][h], by_weekday[i])
                    })
                })
                .collect()
        }
    }
}

pub fn write_series_csv(buckets: &[TimeBucket], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bucket_key", "value"])?;
    for b in buckets {
        w.write_record([b.key.clone(), format!("{:.6}", b.value)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectCell {
    pub weekday: Weekday,
    pub hour: u32,
    pub n: usize,
    pub mean_pa: f64,
    pub mean_na: f64,
    /// Half-width; `None` when n < 2.
    pub ci95_pa: Option<f64>,
    pub ci95_na: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectMatrix {
    /// 168 cells, Monday 00 first, hour-major within a weekday.
    pub cells: Vec<AffectCell>,
}

impl AffectMatrix {
    pub fn cell(&self, weekday: Weekday, hour: u32) -> &AffectCell {
        &self.cells[weekday.num_days_from_monday() as usize * 24 + hour as usize]
    }

    pub fn total_n(&self) -> usize {
        self.cells.iter().map(|c| c.n).sum()
    }
}

pub const Z_95: f64 = 1.96;

/// Mean and normal-approximation 95% half-width (sample standard deviation).
pub fn mean_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (0.0, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(Z_95 * var.sqrt() / (n as f64).sqrt()))
}

/// Per (weekday, hour) means of the tweet-level `PA` and `NA` ratios.
pub fn affect_matrix<'a, I>(tweets: I, lexicon: &Lexicon, zone: Zone) -> Result<AffectMatrix>
where
    I: IntoIterator<Item = (DateTime<Utc>, &'a [String])>,
{
    affect_matrix_for(tweets, lexicon, zone, "PA", "NA")
}

pub fn affect_matrix_for<'a, I>(tweets: I, lexicon: &Lexicon, zone: Zone, pos: &str, neg: &str) -> Result<AffectMatrix>
where
    I: IntoIterator<Item = (DateTime<Utc>, &'a [String])>,
{
    lexicon.category(pos)?;
    lexicon.category(neg)?;
    let mut pa: Vec<Vec<f64>> = vec![Vec::new(); 168];
    let mut na: Vec<Vec<f64>> = vec![Vec::new(); 168];
    for (ts, tokens) in tweets {
        let l = local_time(ts, zone);
        let idx = l.weekday.num_days_from_monday() as usize * 24 + l.hour as usize;
        pa[idx].push(score_category(tokens, lexicon, pos)?.ratio);
        na[idx].push(score_category(tokens, lexicon, neg)?.ratio);
    }
    let cells = (0..168)
        .map(|idx| {
            let (mean_pa, ci95_pa) = mean_ci95(&pa[idx]);
            let (mean_na, ci95_na) = mean_ci95(&na[idx]);
            AffectCell {
                weekday: WEEKDAYS[idx / 24],
                hour: (idx % 24) as u32,
                n: pa[idx].len(),
                mean_pa,
                mean_na,
                ci95_pa,
                ci95_na,
            }
        })
        .collect();
    Ok(AffectMatrix { cells })
}

/// Undefined intervals are written as empty fields.
pub fn write_affect_csv(matrix: &AffectMatrix, out: impl Write) -> Result<()> {
    let ci = |c: Option<f64>| c.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["weekday", "hour", "mean_pa", "ci_pa", "mean_na", "ci_na", "n"])?;
    for c in &matrix.cells {
        w.write_record([
            weekday_name(c.weekday).to_string(),
            c.hour.to_string(),
            format!("{:.6}", c.mean_pa),
            ci(c.ci95_pa),
            format!("{:.6}", c.mean_na),
            ci(c.ci95_na),
            c.n.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utc(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    #[test]
    fn dst_transitions() {
        let fall = to_local(utc("2013-11-03T06:30:00Z"), "America/New_York").unwrap();
        assert_eq!(fall.local.to_string(), "2013-11-03 01:30:00");
        assert_eq!(fall.abbreviation, "EST");
        assert!(!fall.dst);
        let before = to_local(utc("2013-11-03T05:30:00Z"), "America/New_York").unwrap();
        assert_eq!((before.local.to_string().as_str(), before.dst), ("2013-11-03 01:30:00", true));

        let spring = to_local(utc("2014-03-09T07:30:00Z"), "America/New_York").unwrap();
        assert_eq!(spring.local.to_string(), "2014-03-09 03:30:00");
        assert_eq!(spring.abbreviation, "EDT");
        assert!(spring.dst);

        let u = to_local(utc("2014-03-09T07:30:00Z"), "UTC").unwrap();
        assert_eq!(u.local.to_string(), "2014-03-09 07:30:00");
        assert!(matches!(to_local(utc("2014-03-09T07:30:00Z"), "Mars/Olympus"), Err(Error::UnknownZone(_))));
    }

    #[test]
    fn uniform_two_weeks() {
        let zone: Zone = "UTC".parse().unwrap();
        let ts: Vec<_> = (0..14)
            .map(|d| utc("2013-07-01T12:00:00Z") + chrono::Duration::days(d))
            .collect();
        let weekday = volume_series(&ts, Granularity::Weekday, zone);
        assert!(weekday.iter().all(|b| b.denominator == 2 && b.value == 1.0));
        let month = volume_series(&ts[..3], Granularity::Month, zone);
        assert_eq!(month, vec![TimeBucket::new("2013-07".into(), 3, 1)]);
        let hour = volume_series(&ts, Granularity::Hour, zone);
        assert_eq!(hour[12].total, 14);
        assert_eq!(hour[12].denominator, 14);
        assert_eq!(hour[0].value, 0.0);
    }

    #[test]
    fn month_gaps_are_zero_filled() {
        let zone = Zone::default();
        let ts = [utc("2013-07-10T12:00:00Z"), utc("2013-10-10T12:00:00Z")];
        let keys: Vec<_> = volume_series(&ts, Granularity::Month, zone)
            .into_iter()
            .map(|b| (b.key, b.total))
            .collect();
        assert_eq!(
            keys,
            [("2013-07", 1), ("2013-08", 0), ("2013-09", 0), ("2013-10", 1)].map(|(k, c)| (k.to_string(), c))
        );
        assert!(volume_series(&[], Granularity::Month, zone).is_empty());
        assert_eq!(volume_series(&[], Granularity::Hour, zone).len(), 24);
    }

    #[test]
    fn weekday_day_counts() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        // 2013-07-01 is a Monday; ten days end on Wednesday
        assert_eq!(weekday_days(d("2013-07-01"), d("2013-07-10")), [2, 2, 2, 1, 1, 1, 1]);
        assert_eq!(weekday_days(d("2013-07-03"), d("2013-07-03")), [0, 0, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn affect_zero_variance_and_empty() {
        let lex = Lexicon::parse("[PA]\ngood\n[NA]\nbad\n").unwrap();
        let a: Vec<String> = "good a b c d".split(' ').map(String::from).collect();
        let ts = utc("2013-07-01T15:00:00Z");
        let m = affect_matrix([(ts, a.as_slice()), (ts, a.as_slice())], &lex, "UTC".parse().unwrap()).unwrap();
        let c = m.cell(Weekday::Mon, 15);
        assert_eq!((c.n, c.mean_pa, c.ci95_pa), (2, 0.2, Some(0.0)));
        let e = m.cell(Weekday::Tue, 0);
        assert_eq!((e.n, e.mean_pa, e.ci95_pa), (0, 0.0, None));
        assert_eq!(m.total_n(), 2);

        let only_pa = Lexicon::parse("[PA]\ngood\n").unwrap();
        assert!(affect_matrix([(ts, a.as_slice())], &only_pa, Zone::default()).is_err());
    }

    #[test]
    fn ci_matches_hand_value() {
        let (mean, ci) = mean_ci95(&[0.0, 1.0]);
        assert_eq!(mean, 0.5);
        // s = sqrt(0.5), se = 0.5
        assert!((ci.unwrap() - 0.98).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn local_round_trip(secs in 1_300_000_000i64..1_500_000_000, zi in 0usize..4) {
            let zone: Zone = ["America/New_York", "Europe/London", "Australia/Lord_Howe", "UTC"][zi].parse().unwrap();
            let ts = DateTime::from_timestamp(secs, 0).unwrap();
            prop_assert_eq!(local_time(ts, zone).to_utc(), ts);
        }

        #[test]
        fn monthly_counts_sum_to_size(secs in proptest::collection::vec(1_350_000_000i64..1_420_000_000, 0..200)) {
            let ts: Vec<_> = secs.iter().map(|&s| DateTime::from_timestamp(s, 0).unwrap()).collect();
            let zone = Zone::default();
            let total: u64 = volume_series(&ts, Granularity::Month, zone).iter().map(|b| b.total).sum();
            prop_assert_eq!(total as usize, ts.len());
            let total: u64 = volume_series(&ts, Granularity::WeekdayHour, zone).iter().map(|b| b.total).sum();
            prop_assert_eq!(total as usize, ts.len());
        }
    }
}
