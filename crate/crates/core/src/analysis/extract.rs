use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::atomic::{BasisState, Transition};
use crate::error::{Error, Result};
use crate::obe::{parse_basis_state, Spectrum};

use super::fit::{fit_pair, fit_peak, PeakFit, ProfileKind};
use super::peaks::detect_etalon_peaks;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeakStatus {
    Ok,
    /// No extremum in the search window.
    Missing,
    /// Two expected lines that could not be separated; excluded from inversion.
    Blended,
    /// A measured center with no transition attached.
    Unassigned,
}

impl fmt::Display for PeakStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakStatus::Ok => "ok",
            PeakStatus::Missing => "missing",
            PeakStatus::Blended => "blended",
            PeakStatus::Unassigned => "unassigned",
        })
    }
}

impl FromStr for PeakStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ok" => Ok(PeakStatus::Ok),
            "missing" => Ok(PeakStatus::Missing),
            "blended" => Ok(PeakStatus::Blended),
            "unassigned" => Ok(PeakStatus::Unassigned),
            other => Err(Error::InvalidArgument(format!("unknown peak status `{other}`"))),
        }
    }
}

/// Dominant ground and excited characters of a transition.
pub type TransitionLabel = (BasisState, BasisState);

pub fn format_label(label: &TransitionLabel) -> String {
    format!("{}->{}", label.0, label.1)
}

/// Parses `|+3/2,+1/2>->|+3/2,+3/2>`.
pub fn parse_label(s: &str) -> Result<TransitionLabel> {
    let (g, e) = s
        .split_once("->")
        .ok_or_else(|| Error::InvalidArgument(format!("transition label `{s}` lacks `->`")))?;
    Ok((parse_basis_state(g)?, parse_basis_state(e)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakEntry {
    pub label: Option<TransitionLabel>,
    /// NaN when missing.
    pub center_mhz: f64,
    pub sigma_fit_mhz: f64,
    pub fwhm_mhz: f64,
    pub kind: ProfileKind,
    pub status: PeakStatus,
}

impl PeakEntry {
    pub fn from_fit(label: Option<TransitionLabel>, fit: &PeakFit) -> Self {
        PeakEntry {
            label,
            center_mhz: fit.center_mhz,
            sigma_fit_mhz: fit.sigma_fit_mhz,
            fwhm_mhz: fit.fwhm_mhz(),
            kind: fit.kind,
            status: PeakStatus::Ok,
        }
    }

    fn missing(label: TransitionLabel, kind: ProfileKind) -> Self {
        PeakEntry {
            label: Some(label),
            center_mhz: f64::NAN,
            sigma_fit_mhz: f64::NAN,
            fwhm_mhz: f64::NAN,
            kind,
            status: PeakStatus::Missing,
        }
    }

    /// Assigned, fitted and not blended.
    pub fn usable(&self) -> bool {
        self.status == PeakStatus::Ok && self.label.is_some() && self.center_mhz.is_finite()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeakList {
    pub entries: Vec<PeakEntry>,
}

const HEADER: [&str; 6] = ["transition_label", "center_MHz", "sigma_fit_MHz", "fwhm_MHz", "kind", "status"];

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

impl PeakList {
    pub fn usable(&self) -> impl Iterator<Item = &PeakEntry> {
        self.entries.iter().filter(|e| e.usable())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.label.as_ref().map(format_label).unwrap_or_default(),
                num(e.center_mhz),
                num(e.sigma_fit_mhz),
                num(e.fwhm_mhz),
                e.kind.to_string(),
                e.status.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses peak-list CSV. Only transition_label and center_MHz are
    /// required; sigma_fit_MHz defaults to 0 and status to `ok` (or
    /// `unassigned` without a label).
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::from(e).context(name.to_string()))?.clone();
        let col = |c: &str| headers.iter().position(|h| h == c);
        let parse_err = |line: u64, message: String| Error::Parse {
            path: name.to_string(),
            line,
            message,
        };
        let label_col = col("transition_label").ok_or_else(|| parse_err(1, "missing column `transition_label`".into()))?;
        let center_col = col("center_MHz").ok_or_else(|| parse_err(1, "missing column `center_MHz`".into()))?;
        let (sigma_col, fwhm_col, kind_col, status_col) = (col("sigma_fit_MHz"), col("fwhm_MHz"), col("kind"), col("status"));
        let mut entries = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let line = row as u64 + 2;
            let record = record.map_err(|e| Error::from(e).context(name.to_string()))?;
            let field = |c: Option<usize>| c.and_then(|i| record.get(i)).unwrap_or("");
            let number = |c: Option<usize>, default: f64| -> Result<f64> {
                let f = field(c);
                if f.is_empty() {
                    return Ok(default);
                }
                f.parse().map_err(|_| parse_err(line, format!("cannot parse `{f}` as a number")))
            };
            let label_text = field(Some(label_col));
            let label = if label_text.is_empty() {
                None
            } else {
                Some(parse_label(label_text).map_err(|e| parse_err(line, e.to_string()))?)
            };
            let status = match field(status_col) {
                "" if label.is_some() => PeakStatus::Ok,
                "" => PeakStatus::Unassigned,
                s => s.parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            };
            let center_mhz = number(Some(center_col), f64::NAN)?;
            if status == PeakStatus::Ok && !center_mhz.is_finite() {
                return Err(parse_err(line, "an `ok` peak needs a finite center_MHz".into()));
            }
            let kind = match field(kind_col) {
                "" => ProfileKind::Gaussian,
                s => s.parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            };
            let sigma_fit_mhz = number(sigma_col, 0.0)?;
            if sigma_fit_mhz < 0.0 {
                return Err(parse_err(line, "sigma_fit_MHz must be non-negative".into()));
            }
            entries.push(PeakEntry {
                label,
                center_mhz,
                sigma_fit_mhz,
                fwhm_mhz: number(fwhm_col, f64::NAN)?,
                kind,
                status,
            });
        }
        let list = PeakList { entries };
        list.check_duplicates()?;
        Ok(list)
    }

    pub fn check_duplicates(&self) -> Result<()> {
        let labels: Vec<&TransitionLabel> = self.usable().filter_map(|e| e.label.as_ref()).collect();
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("transition {} assigned twice", format_label(a))));
            }
        }
        Ok(())
    }
}

/// Fits one profile around each expected line. Lines closer than twice the
/// fitted FWHM are refit jointly; a pair whose joint covariance is singular is
/// reported as blended.
pub fn extract_peaks(spectrum: &Spectrum, expected: &[Transition], search_half_width_mhz: f64, kind: ProfileKind) -> PeakList {
    let (x, y) = (&spectrum.detuning_mhz, &spectrum.signal);
    let mut lines: Vec<&Transition> = expected.iter().collect();
    lines.sort_by(|a, b| a.detuning_mhz.total_cmp(&b.detuning_mhz));
    let hw = search_half_width_mhz;
    let label = |t: &Transition| (t.ground_label, t.excited_label);
    let mut fits: Vec<Option<PeakFit>> = lines
        .iter()
        .map(|t| fit_peak(x, y, (t.detuning_mhz - hw, t.detuning_mhz + hw), kind).ok())
        .collect();
    let mut entries: Vec<PeakEntry> = lines
        .iter()
        .zip(&fits)
        .map(|(t, f)| match f {
            Some(f) => PeakEntry::from_fit(Some(label(t)), f),
            None => PeakEntry::missing(label(t), kind),
        })
        .collect();
    let mut i = 0;
    while i + 1 < lines.len() {
        let (a, b) = (lines[i], lines[i + 1]);
        let fwhm = [&fits[i], &fits[i + 1]]
            .iter()
            .filter_map(|f| f.as_ref().map(|f| f.fwhm_mhz()))
            .fold(0.0, f64::max);
        if fwhm > 0.0 && (b.detuning_mhz - a.detuning_mhz) < 2.0 * fwhm {
            let window = (a.detuning_mhz - hw, b.detuning_mhz + hw);
            match fit_pair(x, y, window, (a.detuning_mhz, b.detuning_mhz), kind, fwhm) {
                Ok(Some((fa, fb))) => {
                    entries[i] = PeakEntry::from_fit(Some(label(a)), &fa);
                    entries[i + 1] = PeakEntry::from_fit(Some(label(b)), &fb);
                    fits[i] = Some(fa);
                    fits[i + 1] = Some(fb);
                }
                _ => {
                    let merged = fit_peak(x, y, window, kind).ok();
                    for (k, t) in [(i, a), (i + 1, b)] {
                        entries[k] = match &merged {
                            Some(f) => PeakEntry {
                                status: PeakStatus::Blended,
                                ..PeakEntry::from_fit(Some(label(t)), f)
                            },
                            None => PeakEntry {
                                status: PeakStatus::Blended,
                                ..PeakEntry::missing(label(t), kind)
                            },
                        };
                    }
                }
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    PeakList { entries }
}

/// Fits every prominent maximum of the spectrum without reference to a
/// transition table. Entries come back unassigned.
pub fn find_peaks(spectrum: &Spectrum, min_prominence: f64, half_width_mhz: f64, kind: ProfileKind) -> PeakList {
    let (x, y) = (&spectrum.detuning_mhz, &spectrum.signal);
    if x.len() < 2 {
        return PeakList::default();
    }
    let step = (x[x.len() - 1] - x[0]).abs() / (x.len() - 1) as f64;
    let spacing = if step > 0.0 {
        (half_width_mhz / step).floor().max(1.0) as usize
    } else {
        1
    };
    let entries = detect_etalon_peaks(y, min_prominence, spacing)
        .into_iter()
        .filter_map(|i| fit_peak(x, y, (x[i] - half_width_mhz, x[i] + half_width_mhz), kind).ok())
        .map(|f| PeakEntry {
            status: PeakStatus::Unassigned,
            ..PeakEntry::from_fit(None, &f)
        })
        .collect();
    PeakList { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "transition_label,center_MHz,sigma_fit_MHz,fwhm_MHz,kind,status\n\
                    \"|+3/2,+1/2>->|+3/2,+3/2>\",3357.96,1,20,gaussian,ok\n\
                    ,5000,,,gaussian,unassigned\n\
                    \"|+1/2,+1/2>->|+1/2,+3/2>\",,,,gaussian,missing\n";
        let list = PeakList::parse(text, "mem").unwrap();
        assert_eq!(list.entries.len(), 3);
        assert_eq!(list.usable().count(), 1);
        let mut buf = Vec::new();
        list.write_csv(&mut buf).unwrap();
        let again = PeakList::parse(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert_eq!(again.entries.len(), 3);
        assert_eq!(again.entries[0], list.entries[0]);
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = "transition_label,center_MHz\n\"|+3/2,+1/2>->|+3/2,+3/2>\",3357.96\n\"|+1/2,+1/2>->|+1/2,+3/2>\",abc\n";
        match PeakList::parse(text, "peaks.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_assignment_rejected() {
        let text = "transition_label,center_MHz\n\"|+3/2,+1/2>->|+3/2,+3/2>\",1\n\"|+3/2,+1/2>->|+3/2,+3/2>\",2\n";
        assert!(PeakList::parse(text, "mem").is_err());
    }
}
