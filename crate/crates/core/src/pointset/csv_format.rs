//! CSV layout: header `x,y,z,logit_0..logit_{C-1}[,label][,feature_0..feature_{c-1}]`,
//! UTF-8 with LF line endings, one point per row.

use std::fmt::Write;

use ndarray::Array2;

use super::{PointProbabilityCloud, UNKNOWN_LABEL};
use crate::error::{Error, Location, Result};
use crate::scalar::Real;

pub fn encode<R: Real>(cloud: &PointProbabilityCloud<R>) -> String {
    let c = cloud.n_classes();
    let mut header: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    header.extend((0..c).map(|k| format!("logit_{k}")));
    if cloud.labels.is_some() {
        header.push("label".into());
    }
    if let Some(f) = &cloud.features {
        header.extend((0..f.ncols()).map(|k| format!("feature_{k}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..cloud.n_points() {
        let mut first = true;
        let mut field = |out: &mut String, s: &dyn std::fmt::Debug| {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{s:?}").unwrap();
        };
        for v in cloud.coords.row(i) {
            field(&mut out, v);
        }
        for v in cloud.logits.row(i) {
            field(&mut out, v);
        }
        if let Some(labels) = &cloud.labels {
            field(&mut out, &labels[i]);
        }
        if let Some(f) = &cloud.features {
            for v in f.row(i) {
                field(&mut out, v);
            }
        }
        out.push('\n');
    }
    out
}

struct Layout {
    classes: usize,
    has_label: bool,
    channels: usize,
}

fn parse_header(fields: &csv::StringRecord) -> Result<Layout> {
    let bad = |message: String| Error::MalformedHeader {
        location: Location::Line(1),
        message,
    };
    let names: Vec<&str> = fields.iter().map(str::trim).collect();
    if names.len() < 5 || names[..3] != ["x", "y", "z"] {
        return Err(bad("header must start with x,y,z followed by logit columns".into()));
    }
    let mut idx = 3;
    let mut classes = 0;
    while idx < names.len() && names[idx] == format!("logit_{classes}") {
        classes += 1;
        idx += 1;
    }
    if classes < 2 {
        return Err(bad(format!("need at least logit_0 and logit_1, found {classes} logit columns")));
    }
    let has_label = idx < names.len() && names[idx] == "label";
    if has_label {
        idx += 1;
    }
    let mut channels = 0;
    while idx < names.len() && names[idx] == format!("feature_{channels}") {
        channels += 1;
        idx += 1;
    }
    if idx != names.len() {
        return Err(bad(format!("unexpected column {:?}", names[idx])));
    }
    Ok(Layout {
        classes,
        has_label,
        channels,
    })
}

pub fn decode<R: Real>(bytes: &[u8]) -> Result<PointProbabilityCloud<R>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(Error::MalformedHeader {
                location: Location::Line(1),
                message: e.to_string(),
            })
        }
        None => {
            return Err(Error::MalformedHeader {
                location: Location::Line(1),
                message: "empty file".into(),
            })
        }
    };
    let layout = parse_header(&header)?;
    let width = 3 + layout.classes + layout.has_label as usize + layout.channels;

    let mut coords = Vec::new();
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut n = 0usize;
    for record in records {
        let record = record.map_err(|e| Error::DimensionMismatch {
            location: Location::Line(e.position().map_or(0, |p| p.line())),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let location = Location::Line(line);
        if record.len() != width {
            return Err(Error::DimensionMismatch {
                location,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let real = |s: &str| -> Result<R> {
            let v: R = s.trim().parse().map_err(|_| Error::MalformedHeader {
                location,
                message: format!("cannot parse {s:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { location });
            }
            Ok(v)
        };
        let mut fields = record.iter();
        for s in fields.by_ref().take(3) {
            coords.push(real(s)?);
        }
        for s in fields.by_ref().take(layout.classes) {
            logits.push(real(s)?);
        }
        if layout.has_label {
            let s = fields.next().unwrap().trim();
            let label: i64 = s.parse().map_err(|_| Error::LabelOutOfRange {
                location,
                label: i64::MIN,
            })?;
            if label < UNKNOWN_LABEL as i64 || label > i32::MAX as i64 {
                return Err(Error::LabelOutOfRange { location, label });
            }
            labels.push(label as i32);
        }
        for s in fields {
            features.push(real(s)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::DimensionMismatch {
            location: Location::Line(2),
            message: "no data rows".into(),
        });
    }
    let coords = Array2::from_shape_vec((n, 3), coords).expect("coords shape");
    let logits = Array2::from_shape_vec((n, layout.classes), logits).expect("logits shape");
    let labels = layout.has_label.then_some(labels);
    let features = (layout.channels > 0)
        .then(|| Array2::from_shape_vec((n, layout.channels), features).expect("features shape"));
    PointProbabilityCloud::new(coords, logits, labels, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_point_example() {
        let text = "x,y,z,logit_0,logit_1\n0,0,0,1,0\n1,0,0,0,1\n2,0,0,0,0\n";
        let cloud: PointProbabilityCloud<f64> = decode(text.as_bytes()).unwrap();
        assert_eq!(cloud.n_points(), 3);
        assert_eq!(cloud.n_classes(), 2);
        assert_eq!(cloud.logits()[[1, 1]], 1.0);
        assert!(cloud.labels().is_none());
    }

    #[test]
    fn reports_line_numbers() {
        let text = "x,y,z,logit_0,logit_1,label\n0,0,0,1,0,0\n1,0,0,0,1\n";
        match decode::<f64>(text.as_bytes()) {
            Err(Error::DimensionMismatch { location, .. }) => assert_eq!(location, Location::Line(3)),
            other => panic!("unexpected {other:?}"),
        }
        let text = "x,y,z,logit_0,logit_1,label\n0,0,0,1,0,-3\n";
        assert!(matches!(
            decode::<f64>(text.as_bytes()),
            Err(Error::LabelOutOfRange { location: Location::Line(2), label: -3 })
        ));
        let text = "x,y,z,logit_0,logit_1\n0,0,0,NaN,0\n";
        assert!(matches!(
            decode::<f64>(text.as_bytes()),
            Err(Error::NonFiniteValue { location: Location::Line(2) })
        ));
    }

    #[test]
    fn rejects_bad_header() {
        for text in ["a,b,c\n", "x,y,z,logit_0\n0,0,0,1\n", "x,y,z,logit_0,logit_1,color\n"] {
            assert!(matches!(
                decode::<f64>(text.as_bytes()),
                Err(Error::MalformedHeader { location: Location::Line(1), .. })
            ));
        }
    }

    #[test]
    fn encode_uses_lf_and_full_precision() {
        let text = "x,y,z,logit_0,logit_1,label\n0.1,0.2,0.30000000000000004,1e-7,-5.5,-1\n";
        let cloud: PointProbabilityCloud<f64> = decode(text.as_bytes()).unwrap();
        let out = encode(&cloud);
        assert!(!out.contains('\r'));
        let back: PointProbabilityCloud<f64> = decode(out.as_bytes()).unwrap();
        assert_eq!(back, cloud);
    }
}
