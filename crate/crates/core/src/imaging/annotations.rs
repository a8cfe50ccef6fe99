use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::imaging::Annotation;
use crate::model::SampleRef;

/// Reads an annotation sidecar keyed by sample key.
///
/// The header selects the annotation style: `subject,eye,sensor,index,x1,y1,x2,y2`
/// for eye corners or `subject,eye,sensor,index,cx,cy,r` for sclera circles.
pub fn read_annotations(reader: impl std::io::Read) -> Result<BTreeMap<String, Annotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let corners = headers == ["subject", "eye", "sensor", "index", "x1", "y1", "x2", "y2"];
    let sclera = headers == ["subject", "eye", "sensor", "index", "cx", "cy", "r"];
    if !corners && !sclera {
        return Err(Error::Parse {
            line: 1,
            message: "expected corner (x1,y1,x2,y2) or sclera (cx,cy,r) annotation header".into(),
        });
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |message: String| Error::Parse { line, message };
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("column {} is not a finite number", headers[k])))
        };
        let index: u32 = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad index".into()))?;
        let eye = rec[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let sample = SampleRef::new(&rec[0], eye, &rec[2], index, "").map_err(|e| bad(e.to_string()))?;
        let ann = if corners {
            Annotation::Corners {
                p1: (num(4)?, num(5)?),
                p2: (num(6)?, num(7)?),
            }
        } else {
            Annotation::Sclera {
                center: (num(4)?, num(5)?),
                radius: num(6)?,
            }
        };
        if out.insert(sample.key(), ann).is_some() {
            return Err(Error::Duplicate(sample.key()));
        }
    }
    Ok(out)
}
