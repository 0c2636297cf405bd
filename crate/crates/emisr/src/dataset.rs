//! Dataset manifests: patch records, train/val/test split assignment, and
//! the manifest CSV format.
//!
//! A manifest indexes patches cut from a set of EMG map files. `offset` is
//! the patch ordinal in row-major tiling order within its source map, so a
//! record plus the patch size pins down the exact cells.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{slice_into_patches, DomainTag, EmissionMap, PatchPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Data(format!("unknown split label `{s}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How a manifest's records were split.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitPolicy {
    /// Seeded shuffle into fraction-sized splits.
    RandomFraction { train: f64, val: f64, test: f64 },
    /// Assignment by calendar year; a record's year is
    /// `time_index / frames_per_year`. Inclusive train range.
    ByYear {
        train_years: (u32, u32),
        val_year: u32,
        test_year: u32,
        frames_per_year: u32,
    },
}

impl SplitPolicy {
    /// Compact single-token encoding used in the manifest CSV header.
    pub fn encode(&self) -> String {
        match self {
            SplitPolicy::RandomFraction { train, val, test } => {
                format!("random(train={train},val={val},test={test})")
            }
            SplitPolicy::ByYear {
                train_years,
                val_year,
                test_year,
                frames_per_year,
            } => format!(
                "by_year(train={}..={},val={val_year},test={test_year},frames_per_year={frames_per_year})",
                train_years.0, train_years.1
            ),
        }
    }

    pub fn decode(s: &str) -> Result<Self> {
        let err = || Error::Data(format!("unparseable split policy `{s}`"));
        let field = |body: &str, key: &str| -> Result<String> {
            body.split(',')
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(err)
        };
        if let Some(body) = s.strip_prefix("random(").and_then(|r| r.strip_suffix(')')) {
            let get = |k| -> Result<f64> { field(body, k)?.parse().map_err(|_| err()) };
            Ok(SplitPolicy::RandomFraction {
                train: get("train")?,
                val: get("val")?,
                test: get("test")?,
            })
        } else if let Some(body) = s.strip_prefix("by_year(").and_then(|r| r.strip_suffix(')')) {
            let get = |k| -> Result<u32> { field(body, k)?.parse().map_err(|_| err()) };
            let range = field(body, "train")?;
            let (lo, hi) = range.split_once("..=").ok_or_else(err)?;
            Ok(SplitPolicy::ByYear {
                train_years: (
                    lo.parse().map_err(|_| err())?,
                    hi.parse().map_err(|_| err())?,
                ),
                val_year: get("val")?,
                test_year: get("test")?,
                frames_per_year: get("frames_per_year")?,
            })
        } else {
            Err(err())
        }
    }
}

/// One patch entry in a manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub patch_id: u64,
    pub file: String,
    /// Patch ordinal in row-major tiling order within `file`.
    pub offset: u32,
    pub split: Split,
    pub domain: DomainTag,
    pub time_index: u32,
    pub empty: bool,
}

pub const MANIFEST_HEADER: &str = "patch_id,file,offset,split,domain,time_index,empty";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub seed: u64,
    pub split_policy: SplitPolicy,
}

impl DatasetManifest {
    /// Seeded shuffle into splits of sizes `(round(f_train·N), round(f_val·N),
    /// remainder)`. Returns a new manifest; record order is preserved, only
    /// split fields change.
    pub fn split_random(&self, fractions: (f64, f64, f64), seed: u64) -> Result<DatasetManifest> {
        let (ft, fv, fs) = fractions;
        if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
            return Err(Error::Config(format!(
                "split fractions must be positive, got ({ft}, {fv}, {fs})"
            )));
        }
        if (ft + fv + fs - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {}",
                ft + fv + fs
            )));
        }
        let n = self.records.len();
        if n == 0 {
            return Err(Error::Data("cannot split an empty manifest".into()));
        }
        let n_train = (ft * n as f64).round() as usize;
        let n_val = (fv * n as f64).round() as usize;
        if n_train + n_val > n {
            return Err(Error::Config(format!(
                "rounded train+val sizes {n_train}+{n_val} exceed {n} records"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut records = self.records.clone();
        for (rank, &idx) in order.iter().enumerate() {
            records[idx].split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        Ok(DatasetManifest {
            records,
            seed,
            split_policy: SplitPolicy::RandomFraction {
                train: ft,
                val: fv,
                test: fs,
            },
        })
    }

    /// Assign splits by calendar year (`time_index / frames_per_year`);
    /// records outside all three ranges are dropped.
    pub fn split_by_year(
        &self,
        train_years: (u32, u32),
        val_year: u32,
        test_year: u32,
        frames_per_year: u32,
    ) -> Result<DatasetManifest> {
        let (lo, hi) = train_years;
        if lo > hi {
            return Err(Error::Config(format!(
                "empty train year range {lo}..={hi}"
            )));
        }
        if frames_per_year == 0 {
            return Err(Error::Config("frames_per_year must be positive".into()));
        }
        let in_train = |y: u32| y >= lo && y <= hi;
        if in_train(val_year) || in_train(test_year) || val_year == test_year {
            return Err(Error::Config(format!(
                "year splits overlap: train {lo}..={hi}, val {val_year}, test {test_year}"
            )));
        }
        let mut records = Vec::new();
        for r in &self.records {
            let year = r.time_index / frames_per_year;
            let split = if in_train(year) {
                Split::Train
            } else if year == val_year {
                Split::Val
            } else if year == test_year {
                Split::Test
            } else {
                continue;
            };
            let mut r = r.clone();
            r.split = split;
            records.push(r);
        }
        Ok(DatasetManifest {
            records,
            seed: self.seed,
            split_policy: SplitPolicy::ByYear {
                train_years,
                val_year,
                test_year,
                frames_per_year,
            },
        })
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.records_in(split).count()
    }

    /// Write the manifest CSV: `# seed=` and `# split_policy=` comment
    /// lines, the fixed header, then one record per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# split_policy={}\n", self.split_policy.encode()));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.patch_id,
                r.file,
                r.offset,
                r.split,
                r.domain,
                r.time_index,
                if r.empty { 1 } else { 0 }
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut seed = None;
        let mut policy = None;
        let mut header_seen = false;
        let mut records = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let fail = |msg: String| Error::format(path, format!("line {}: {msg}", ln + 1));
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(v) = rest.strip_prefix("seed=") {
                    seed = Some(v.parse::<u64>().map_err(|e| fail(format!("bad seed: {e}")))?);
                } else if let Some(v) = rest.strip_prefix("split_policy=") {
                    policy = Some(SplitPolicy::decode(v).map_err(|e| fail(e.to_string()))?);
                }
                continue;
            }
            if !header_seen {
                if line != MANIFEST_HEADER {
                    return Err(fail(format!(
                        "expected header `{MANIFEST_HEADER}`, got `{line}`"
                    )));
                }
                header_seen = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(fail(format!("expected 7 fields, got {}", fields.len())));
            }
            records.push(ManifestRecord {
                patch_id: fields[0].parse().map_err(|e| fail(format!("patch_id: {e}")))?,
                file: fields[1].to_string(),
                offset: fields[2].parse().map_err(|e| fail(format!("offset: {e}")))?,
                split: Split::parse_label(fields[3]).map_err(|e| fail(e.to_string()))?,
                domain: DomainTag::parse_label(fields[4]).map_err(|e| fail(e.to_string()))?,
                time_index: fields[5].parse().map_err(|e| fail(format!("time_index: {e}")))?,
                empty: match fields[6] {
                    "0" => false,
                    "1" => true,
                    other => return Err(fail(format!("empty flag must be 0/1, got `{other}`"))),
                },
            });
        }
        if !header_seen {
            return Err(Error::format(path, "missing manifest header"));
        }
        let seed = seed.ok_or_else(|| Error::format(path, "missing `# seed=` line"))?;
        let split_policy =
            policy.ok_or_else(|| Error::format(path, "missing `# split_policy=` line"))?;
        Ok(DatasetManifest {
            records,
            seed,
            split_policy,
        })
    }

    /// Load the HR/LR pairs for every record, in record order. Each EMG
    /// file is read and sliced once. The pair takes domain and emptiness
    /// from the record (the manifest may retag domains).
    pub fn load_pairs(&self, base_dir: &Path, patch_size: usize) -> Result<Vec<PatchPair>> {
        let mut cache: HashMap<&str, Vec<crate::grid::HrPatch>> = HashMap::new();
        let mut pairs = Vec::with_capacity(self.records.len());
        for r in &self.records {
            if !cache.contains_key(r.file.as_str()) {
                let map = EmissionMap::read_emg(&base_dir.join(&r.file))?;
                cache.insert(&r.file, slice_into_patches(&map, patch_size)?);
            }
            let patches = &cache[r.file.as_str()];
            let patch = patches.get(r.offset as usize).ok_or_else(|| {
                Error::Data(format!(
                    "patch offset {} out of range for {} ({} patches)",
                    r.offset,
                    r.file,
                    patches.len()
                ))
            })?;
            pairs.push(PatchPair::derive(patch, r.file.clone(), r.domain)?);
        }
        Ok(pairs)
    }
}

/// Index every patch of a set of sliced maps into manifest records.
/// `maps` supplies (file name, patch count, domain, time_index, per-patch
/// empty flags); ids are assigned sequentially. All records start in the
/// train split until a split op assigns them.
pub fn build_records(
    maps: impl IntoIterator<Item = (String, DomainTag, u32, Vec<bool>)>,
) -> Vec<ManifestRecord> {
    let mut records = Vec::new();
    let mut patch_id = 0u64;
    for (file, domain, time_index, empties) in maps {
        for (offset, empty) in empties.into_iter().enumerate() {
            records.push(ManifestRecord {
                patch_id,
                file: file.clone(),
                offset: offset as u32,
                split: Split::Train,
                domain,
                time_index,
                empty,
            });
            patch_id += 1;
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> DatasetManifest {
        manifest_with_times(&(0..n as u32).collect::<Vec<_>>())
    }

    fn manifest_with_times(times: &[u32]) -> DatasetManifest {
        let records = times
            .iter()
            .enumerate()
            .map(|(i, &t)| ManifestRecord {
                patch_id: i as u64,
                file: format!("m{}.emg", i / 4),
                offset: (i % 4) as u32,
                split: Split::Train,
                domain: DomainTag::Simulated,
                time_index: t,
                empty: false,
            })
            .collect();
        DatasetManifest {
            records,
            seed: 0,
            split_policy: SplitPolicy::RandomFraction {
                train: 0.7,
                val: 0.2,
                test: 0.1,
            },
        }
    }

    fn sizes(m: &DatasetManifest) -> (usize, usize, usize) {
        (m.count(Split::Train), m.count(Split::Val), m.count(Split::Test))
    }

    #[test]
    fn random_split_sizes_round_with_test_remainder() {
        let m = manifest(10).split_random((0.7, 0.2, 0.1), 7).unwrap();
        assert_eq!(sizes(&m), (7, 2, 1));
        let m = manifest(100).split_random((0.7, 0.2, 0.1), 7).unwrap();
        assert_eq!(sizes(&m), (70, 20, 10));
    }

    #[test]
    fn random_split_is_seed_deterministic() {
        let base = manifest(53);
        let a = base.split_random((0.7, 0.2, 0.1), 42).unwrap();
        let b = base.split_random((0.7, 0.2, 0.1), 42).unwrap();
        assert_eq!(a, b);
        let c = base.split_random((0.7, 0.2, 0.1), 43).unwrap();
        assert_eq!(sizes(&a), sizes(&c));
        assert_ne!(
            a.records.iter().map(|r| r.split).collect::<Vec<_>>(),
            c.records.iter().map(|r| r.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn random_split_rejects_bad_inputs() {
        assert!(manifest(10).split_random((0.7, 0.2, 0.2), 1).is_err());
        assert!(manifest(10).split_random((0.7, 0.3, 0.0), 1).is_err());
        let empty = DatasetManifest {
            records: vec![],
            seed: 0,
            split_policy: SplitPolicy::RandomFraction {
                train: 0.7,
                val: 0.2,
                test: 0.1,
            },
        };
        assert!(empty.split_random((0.7, 0.2, 0.1), 1).is_err());
    }

    #[test]
    fn random_split_is_an_exact_partition() {
        let m = manifest(37).split_random((0.7, 0.2, 0.1), 5).unwrap();
        let (t, v, s) = sizes(&m);
        assert_eq!(t + v + s, 37);
    }

    #[test]
    fn year_split_partitions_calendar_years() {
        let times: Vec<u32> = (2007..=2012).collect();
        let m = manifest_with_times(&times)
            .split_by_year((2007, 2010), 2011, 2012, 1)
            .unwrap();
        assert_eq!(sizes(&m), (4, 1, 1));
    }

    #[test]
    fn year_split_excludes_out_of_range_records() {
        let m = manifest_with_times(&[2007, 2013])
            .split_by_year((2007, 2010), 2011, 2012, 1)
            .unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].time_index, 2007);
    }

    #[test]
    fn year_split_rejects_degenerate_and_overlapping_ranges() {
        let m = manifest_with_times(&[2007]);
        assert!(m.split_by_year((2010, 2007), 2011, 2012, 1).is_err());
        assert!(m.split_by_year((2007, 2011), 2011, 2012, 1).is_err());
        assert!(m.split_by_year((2007, 2010), 2012, 2012, 1).is_err());
    }

    #[test]
    fn year_split_groups_monthly_frames() {
        let times: Vec<u32> = (0..48).collect();
        let m = manifest_with_times(&times)
            .split_by_year((0, 1), 2, 3, 12)
            .unwrap();
        assert_eq!(sizes(&m), (24, 12, 12));
        assert!(m
            .records_in(Split::Test)
            .all(|r| r.time_index / 12 == 3));
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut m = manifest(9).split_random((0.7, 0.2, 0.1), 3).unwrap();
        m.records[4].domain = DomainTag::Observed(1);
        m.records[5].empty = true;
        m.write_csv(&path).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let loaded = DatasetManifest::read_csv(&path).unwrap();
        assert_eq!(loaded, m);
        loaded.write_csv(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, "# seed=1\nnot,the,header\n").unwrap();
        assert!(matches!(
            DatasetManifest::read_csv(&path),
            Err(Error::Format { .. })
        ));
        std::fs::write(
            &path,
            format!("# seed=1\n# split_policy=random(train=0.7,val=0.2,test=0.1)\n{MANIFEST_HEADER}\n0,m.emg,0,train,S,0\n"),
        )
        .unwrap();
        assert!(matches!(
            DatasetManifest::read_csv(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn policy_encoding_round_trips() {
        for p in [
            SplitPolicy::RandomFraction {
                train: 0.7,
                val: 0.2,
                test: 0.1,
            },
            SplitPolicy::ByYear {
                train_years: (0, 1),
                val_year: 2,
                test_year: 3,
                frames_per_year: 12,
            },
        ] {
            assert_eq!(SplitPolicy::decode(&p.encode()).unwrap(), p);
        }
        assert!(SplitPolicy::decode("bogus").is_err());
    }

    #[test]
    fn load_pairs_reads_back_sliced_maps() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..64 * 64).map(|i| (i % 97) as f32).collect();
        let map = EmissionMap::new(
            values,
            64,
            64,
            0.25,
            DomainTag::Simulated,
            3,
            crate::grid::DEFAULT_SPECIES,
        )
        .unwrap();
        map.write_emg(&dir.path().join("m0.emg")).unwrap();
        let patches = slice_into_patches(&map, 32).unwrap();
        let records = build_records([(
            "m0.emg".to_string(),
            DomainTag::SimulatedTimeLimited,
            3,
            patches.iter().map(|p| p.empty).collect(),
        )]);
        let manifest = DatasetManifest {
            records,
            seed: 1,
            split_policy: SplitPolicy::RandomFraction {
                train: 0.7,
                val: 0.2,
                test: 0.1,
            },
        };
        let pairs = manifest.load_pairs(dir.path(), 32).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs[2].hr, patches[2].values);
        // Domain comes from the record, allowing manifest-level retagging.
        assert_eq!(pairs[0].domain, DomainTag::SimulatedTimeLimited);
    }
}
