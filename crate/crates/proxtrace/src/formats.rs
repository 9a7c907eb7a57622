//! Line-oriented file formats.
//!
//! Every file written here starts with one JSON header line carrying at
//! least `format` and `config_hash`, followed by a CSV column header and rows.
//! Readers accept files with or without the JSON line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use proxtrace_core::contact_store::{ContactLog, ContactRecord, InfectionRegistry};
use proxtrace_core::geo::GeoPoint;
use proxtrace_core::routing::CityGraph;
use proxtrace_core::tracing::{ContactEvent, SnapshotBatch};
use proxtrace_core::{GeoRecord, UserId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SNAPSHOT_COLUMNS: [&str; 4] = ["user_id", "lat", "lon", "snapshot"];
pub const CONTACT_COLUMNS: [&str; 5] = ["user_a", "user_b", "interval", "lat", "lon"];
pub const CHECKPOINT_COLUMNS: [&str; 5] = ["user_id", "contact_id", "interval", "lat", "lon"];
pub const REGISTRY_COLUMNS: [&str; 2] = ["user_id", "diagnosed_interval"];
pub const GRAPH_COLUMNS: [&str; 3] = ["city_a", "city_b", "km"];

const BINARY_MAGIC: &[u8; 4] = b"PXSB";

pub fn header(format: &str, config_hash: &str, extra: Value) -> Value {
    let mut h = json!({ "format": format, "config_hash": config_hash });
    if let (Some(obj), Value::Object(more)) = (h.as_object_mut(), extra) {
        obj.extend(more);
    }
    h
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Consumes the JSON header line if there is one.
fn take_header<R: BufRead>(r: &mut R) -> Result<Option<Value>> {
    let starts_json = r.fill_buf()?.first() == Some(&b'{');
    if !starts_json {
        return Ok(None);
    }
    let mut line = String::new();
    r.read_line(&mut line)?;
    Ok(Some(serde_json::from_str(&line).context("header line is not JSON")?))
}

fn csv_reader<R: Read>(r: R, columns: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    ensure!(got == columns, "expected columns {:?}, found {:?}", columns, got);
    Ok(rdr)
}

fn csv_writer<W: Write>(mut w: W, head: &Value, columns: &[&str]) -> Result<csv::Writer<W>> {
    writeln!(w, "{head}")?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(columns)?;
    Ok(wtr)
}

fn point(lat: f64, lon: f64, row: usize) -> Result<GeoPoint> {
    GeoPoint::new(lat, lon).with_context(|| format!("row {row}"))
}

// ---- snapshots

#[derive(Debug, Deserialize, Serialize)]
struct SnapshotRow {
    user_id: u64,
    lat: f64,
    lon: f64,
    snapshot: u64,
}

pub fn write_snapshot_csv<W: Write>(w: W, head: &Value, batch: &SnapshotBatch) -> Result<()> {
    let mut wtr = csv_writer(w, head, &SNAPSHOT_COLUMNS)?;
    for r in &batch.records {
        // `{}` on f64 is the shortest round-trip form.
        wtr.write_record([r.user.0.to_string(), r.point.lat.to_string(), r.point.lon.to_string(), r.snapshot.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads one snapshot file. The snapshot id comes from the rows, or from the
/// header's `snapshot` field for an empty file.
pub fn read_snapshot_csv<R: Read>(r: R) -> Result<(Option<Value>, SnapshotBatch)> {
    let mut r = BufReader::new(r);
    let head = take_header(&mut r)?;
    let mut snapshot = head.as_ref().and_then(|h| h["snapshot"].as_u64());
    let mut records = Vec::new();
    for (i, row) in csv_reader(r, &SNAPSHOT_COLUMNS)?.deserialize::<SnapshotRow>().enumerate() {
        let row = row.with_context(|| format!("snapshot row {}", i + 1))?;
        match snapshot {
            Some(s) if s != row.snapshot => bail!("row {}: snapshot {} in a file for snapshot {}", i + 1, row.snapshot, s),
            _ => snapshot = Some(row.snapshot),
        }
        records.push(GeoRecord { user: UserId(row.user_id), point: point(row.lat, row.lon, i + 1)?, snapshot: row.snapshot });
    }
    let snapshot = snapshot.context("empty snapshot file without a snapshot id in its header")?;
    Ok((head, SnapshotBatch { snapshot, records }))
}

/// Binary layout, little endian: magic, u32 header length, header JSON,
/// u64 record count, then `(u64 user, f64 lat, f64 lon)` per record.
pub fn write_snapshot_bin<W: Write>(mut w: W, head: &Value, batch: &SnapshotBatch) -> Result<()> {
    let mut head = head.clone();
    head["snapshot"] = json!(batch.snapshot);
    let head = serde_json::to_vec(&head)?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&u32::try_from(head.len())?.to_le_bytes())?;
    w.write_all(&head)?;
    w.write_all(&(batch.records.len() as u64).to_le_bytes())?;
    for r in &batch.records {
        w.write_all(&r.user.0.to_le_bytes())?;
        w.write_all(&r.point.lat.to_le_bytes())?;
        w.write_all(&r.point.lon.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_snapshot_bin<R: Read>(mut r: R) -> Result<(Option<Value>, SnapshotBatch)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    ensure!(&magic == BINARY_MAGIC, "not a binary snapshot file");
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut head = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut head)?;
    let head: Value = serde_json::from_slice(&head).context("binary header")?;
    let snapshot = head["snapshot"].as_u64().context("binary header lacks snapshot")?;
    let n = u64::from_le_bytes(read_u64(&mut r)?);
    let mut records = Vec::with_capacity(n.min(1 << 26) as usize);
    for i in 0..n {
        let user = UserId(u64::from_le_bytes(read_u64(&mut r)?));
        let lat = f64::from_le_bytes(read_u64(&mut r)?);
        let lon = f64::from_le_bytes(read_u64(&mut r)?);
        records.push(GeoRecord { user, point: point(lat, lon, i as usize + 1)?, snapshot });
    }
    Ok((Some(head), SnapshotBatch { snapshot, records }))
}

pub fn write_snapshot_file(path: &Path, head: &Value, batch: &SnapshotBatch, binary: bool) -> Result<()> {
    let w = create(path)?;
    if binary { write_snapshot_bin(w, head, batch) } else { write_snapshot_csv(w, head, batch) }
        .with_context(|| format!("writing {}", path.display()))
}

/// Either format, told apart by the magic bytes.
pub fn read_snapshot_file(path: &Path) -> Result<SnapshotBatch> {
    let mut r = open(path)?;
    let binary = r.fill_buf()?.starts_with(BINARY_MAGIC);
    let res = if binary { read_snapshot_bin(r) } else { read_snapshot_csv(r) };
    Ok(res.with_context(|| format!("reading {}", path.display()))?.1)
}

// ---- contacts

#[derive(Debug, Deserialize)]
struct ContactRow {
    user_a: u64,
    user_b: u64,
    interval: u64,
    lat: f64,
    lon: f64,
}

pub fn write_contacts<W: Write>(w: W, head: &Value, events: &[ContactEvent]) -> Result<()> {
    let mut wtr = csv_writer(w, head, &CONTACT_COLUMNS)?;
    for e in events {
        wtr.write_record([
            e.pair.user_a().to_string(),
            e.pair.user_b().to_string(),
            e.snapshot_from.to_string(),
            e.location.lat.to_string(),
            e.location.lon.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_contacts<R: Read>(r: R) -> Result<Vec<ContactEvent>> {
    let mut r = BufReader::new(r);
    take_header(&mut r)?;
    let mut out = Vec::new();
    for (i, row) in csv_reader(r, &CONTACT_COLUMNS)?.deserialize::<ContactRow>().enumerate() {
        let row = row.with_context(|| format!("contact row {}", i + 1))?;
        let pair = proxtrace_core::ContactPair::new(UserId(row.user_a), UserId(row.user_b))
            .with_context(|| format!("contact row {}: a user cannot contact itself", i + 1))?;
        out.push(ContactEvent {
            pair,
            snapshot_from: row.interval,
            snapshot_to: row.interval + 1,
            location: point(row.lat, row.lon, i + 1)?,
        });
    }
    Ok(out)
}

// ---- contact log checkpoint

#[derive(Debug, Deserialize)]
struct CheckpointRow {
    user_id: u64,
    contact_id: u64,
    interval: u64,
    lat: f64,
    lon: f64,
}

pub fn write_checkpoint<W: Write>(w: W, head: &Value, log: &ContactLog) -> Result<()> {
    let mut wtr = csv_writer(w, head, &CHECKPOINT_COLUMNS)?;
    for (u, r) in log.entries() {
        wtr.write_record([
            u.to_string(),
            r.contact.to_string(),
            r.interval.to_string(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rows are taken as written; a checkpoint holding one direction of a contact
/// loads that direction only.
pub fn read_checkpoint<R: Read>(r: R) -> Result<ContactLog> {
    let mut r = BufReader::new(r);
    take_header(&mut r)?;
    let mut log = ContactLog::new();
    for (i, row) in csv_reader(r, &CHECKPOINT_COLUMNS)?.deserialize::<CheckpointRow>().enumerate() {
        let row = row.with_context(|| format!("checkpoint row {}", i + 1))?;
        let rec = ContactRecord { contact: UserId(row.contact_id), interval: row.interval, location: point(row.lat, row.lon, i + 1)? };
        log.push(UserId(row.user_id), rec);
    }
    Ok(log)
}

// ---- registry

#[derive(Debug, Deserialize)]
struct RegistryRow {
    user_id: u64,
    diagnosed_interval: u64,
}

pub fn write_registry<W: Write>(w: W, head: &Value, reg: &InfectionRegistry) -> Result<()> {
    let mut wtr = csv_writer(w, head, &REGISTRY_COLUMNS)?;
    for u in reg.positives() {
        let at = reg.diagnosed_at(u).expect("positive has a diagnosis");
        wtr.write_record([u.to_string(), at.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_registry<R: Read>(r: R) -> Result<InfectionRegistry> {
    let mut r = BufReader::new(r);
    take_header(&mut r)?;
    let mut reg = InfectionRegistry::new();
    for (i, row) in csv_reader(r, &REGISTRY_COLUMNS)?.deserialize::<RegistryRow>().enumerate() {
        let row = row.with_context(|| format!("registry row {}", i + 1))?;
        reg.mark_positive(UserId(row.user_id), row.diagnosed_interval);
    }
    Ok(reg)
}

// ---- routing inputs

#[derive(Debug, Deserialize)]
struct EdgeRow {
    city_a: String,
    city_b: String,
    km: f64,
}

pub fn read_graph<R: Read>(r: R) -> Result<CityGraph> {
    let mut g = CityGraph::new();
    for (i, row) in csv_reader(r, &GRAPH_COLUMNS)?.deserialize::<EdgeRow>().enumerate() {
        let e = row.with_context(|| format!("graph row {}", i + 1))?;
        g.add_edge(&e.city_a, &e.city_b, e.km).with_context(|| format!("graph row {}", i + 1))?;
    }
    Ok(g)
}

/// One city per line; blank lines and `#` comments are skipped.
pub fn read_hotspots<R: Read>(r: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let city = line.trim();
        if !city.is_empty() && !city.starts_with('#') {
            out.push(city.to_string());
        }
    }
    Ok(out)
}

macro_rules! file_reader {
    ($name:ident, $inner:ident, $t:ty) => {
        pub fn $name(path: &Path) -> Result<$t> {
            $inner(open(path)?).with_context(|| format!("reading {}", path.display()))
        }
    };
}

file_reader!(read_contacts_file, read_contacts, Vec<ContactEvent>);
file_reader!(read_checkpoint_file, read_checkpoint, ContactLog);
file_reader!(read_registry_file, read_registry, InfectionRegistry);
file_reader!(read_graph_file, read_graph, CityGraph);
file_reader!(read_hotspots_file, read_hotspots, Vec<String>);

/// Opens `path` for writing and runs `f` on it.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proxtrace_core::tracing::ContactPair;

    fn batch() -> SnapshotBatch {
        let records = (0..5)
            .map(|i| GeoRecord {
                user: UserId(i),
                point: GeoPoint { lat: 22.0 + i as f64 * 1.234_567_890_123e-5, lon: 75.8 + 1.0 / 3.0 },
                snapshot: 4,
            })
            .collect();
        SnapshotBatch { snapshot: 4, records }
    }

    #[test]
    fn snapshot_csv_round_trip_is_exact() {
        let head = header("snapshot", "abc", json!({ "seed": 7 }));
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &head, &batch()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1) == Some("user_id,lat,lon,snapshot"));
        let (h, b) = read_snapshot_csv(&buf[..]).unwrap();
        assert_eq!(h.unwrap()["seed"], 7);
        assert_eq!(b, batch());
    }

    #[test]
    fn snapshot_binary_round_trip() {
        let mut buf = Vec::new();
        write_snapshot_bin(&mut buf, &header("snapshot", "abc", json!({})), &batch()).unwrap();
        let (h, b) = read_snapshot_bin(&buf[..]).unwrap();
        assert_eq!(h.unwrap()["config_hash"], "abc");
        assert_eq!(b, batch());
    }

    #[test]
    fn empty_snapshot_needs_header_id() {
        let mut buf = Vec::new();
        let empty = SnapshotBatch { snapshot: 3, records: vec![] };
        write_snapshot_csv(&mut buf, &header("snapshot", "x", json!({ "snapshot": 3 })), &empty).unwrap();
        assert_eq!(read_snapshot_csv(&buf[..]).unwrap().1, empty);
        assert!(read_snapshot_csv("user_id,lat,lon,snapshot\n".as_bytes()).is_err());
    }

    #[test]
    fn bad_rows_are_reported() {
        let bad = "user_id,lat,lon,snapshot\n1,22.0,75.0,0\n2,abc,75.0,0\n";
        let err = format!("{:#}", read_snapshot_csv(bad.as_bytes()).unwrap_err());
        assert!(err.contains("row 2"), "{err}");
        assert!(read_snapshot_csv("user,lat,lon,snapshot\n".as_bytes()).is_err());
        let mixed = "user_id,lat,lon,snapshot\n1,22.0,75.0,0\n2,22.0,75.0,1\n";
        assert!(read_snapshot_csv(mixed.as_bytes()).is_err());
    }

    #[test]
    fn contacts_round_trip() {
        let ev = ContactEvent {
            pair: ContactPair::new(UserId(9), UserId(2)).unwrap(),
            snapshot_from: 5,
            snapshot_to: 6,
            location: GeoPoint { lat: 22.5, lon: 75.5 },
        };
        let mut buf = Vec::new();
        write_contacts(&mut buf, &header("contacts", "h", json!({})), &[ev]).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\n2,9,5,22.5,75.5\n"));
        assert_eq!(read_contacts(&buf[..]).unwrap(), vec![ev]);
    }

    #[test]
    fn checkpoint_and_registry_round_trip() {
        let mut log = ContactLog::new();
        let loc = GeoPoint { lat: 22.5, lon: 75.5 };
        log.record_events(&[ContactEvent {
            pair: ContactPair::new(UserId(1), UserId(2)).unwrap(),
            snapshot_from: 3,
            snapshot_to: 4,
            location: loc,
        }]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header("checkpoint", "h", json!({})), &log).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap().entries(), log.entries());

        let mut reg = InfectionRegistry::new();
        reg.mark_positive(UserId(4), 2);
        reg.mark_positive(UserId(1), 7);
        let mut buf = Vec::new();
        write_registry(&mut buf, &header("registry", "h", json!({})), &reg).unwrap();
        let back = read_registry(&buf[..]).unwrap();
        assert_eq!(back.positives(), reg.positives());
        assert_eq!(back.diagnosed_at(UserId(1)), Some(7));
    }

    #[test]
    fn graph_and_hotspot_lists() {
        let text = "city_a,city_b,km\n# comment\nA, B ,3\nB,C,4\n";
        let g = read_graph(text.as_bytes()).unwrap();
        assert_eq!(g.edge_weight("B", "A"), Some(3.0));
        assert!(read_graph("city_a,city_b,km\nA,A,3\n".as_bytes()).is_err());
        assert!(read_graph("city_a,city_b,km\nA,B,-1\n".as_bytes()).is_err());
        assert_eq!(read_hotspots("Indore\n\n# x\n Bhopal \n".as_bytes()).unwrap(), vec!["Indore", "Bhopal"]);
    }
}
