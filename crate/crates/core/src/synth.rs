//! Seeded synthetic RAN generator.
//!
//! Sites are scattered around cluster centers (urban, suburban, rural
//! archetypes). Each site hosts one mixed-technology node with sectorized
//! cells. A cell's clean configuration is a fixed function of its cluster
//! and predictors; observed values add clipped gaussian noise, and a chosen
//! subset of cells receives large positive offsets on two config attributes.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    Aggregation, AttributeEntry, AttributeKind, AttributeSchema, CellRecord, EdgeKind, RanGraph,
    Role, Technology,
};
use crate::numeric::cosine;
use crate::rng::{self, Stream};

/// Oracle accuracy below which a generated network counts as unlearnable.
pub const LEARNABILITY_THRESHOLD: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub sites: usize,
    pub cells_per_site: usize,
    /// LTE share of the LTE:NR mix.
    pub lte_ratio: u32,
    pub nr_ratio: u32,
    pub context_clusters: usize,
    /// Standard deviation in range-normalized units.
    pub config_noise: f64,
    pub misconfig_rate: f64,
    /// Offset size in attribute ranges.
    pub misconfig_magnitude: f64,
    /// Average inter-node edges per cell.
    pub inter_site_degree: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sites: 50,
            cells_per_site: 6,
            lte_ratio: 2,
            nr_ratio: 1,
            context_clusters: 3,
            config_noise: 0.02,
            misconfig_rate: 0.0,
            misconfig_magnitude: 5.0,
            inter_site_degree: 3.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sites == 0 || self.cells_per_site == 0 || self.context_clusters == 0 {
            return bad("sites, cells_per_site and context_clusters must be positive".into());
        }
        if self.lte_ratio + self.nr_ratio == 0 {
            return bad("LTE:NR ratio must not be 0:0".into());
        }
        if !(self.config_noise >= 0.0 && self.config_noise.is_finite()) {
            return bad(format!(
                "config_noise {} must be a non-negative number",
                self.config_noise
            ));
        }
        if !(0.0..=1.0).contains(&self.misconfig_rate) {
            return bad(format!(
                "misconfig_rate {} is outside [0, 1]",
                self.misconfig_rate
            ));
        }
        if !(self.misconfig_magnitude >= 0.0 && self.misconfig_magnitude.is_finite()) {
            return bad(format!(
                "misconfig_magnitude {} must be non-negative",
                self.misconfig_magnitude
            ));
        }
        if !(self.inter_site_degree >= 0.0 && self.inter_site_degree.is_finite()) {
            return bad(format!(
                "inter_site_degree {} must be non-negative",
                self.inter_site_degree
            ));
        }
        Ok(())
    }

    pub fn total_cells(&self) -> usize {
        self.sites * self.cells_per_site
    }

    /// LTE and NR cell counts per site.
    pub fn split_cells(&self) -> (usize, usize) {
        let share = self.lte_ratio as f64 / (self.lte_ratio + self.nr_ratio) as f64;
        let lte = (self.cells_per_site as f64 * share).round() as usize;
        (lte, self.cells_per_site - lte)
    }
}

#[derive(Debug, Clone, Copy)]
struct ConfigAttr {
    name: &'static str,
    technology: Technology,
    lo: f64,
    hi: f64,
    /// Grid step for discrete attributes.
    step: Option<f64>,
}

impl ConfigAttr {
    fn range(&self) -> f64 {
        self.hi - self.lo
    }

    fn to_raw(&self, u: f64) -> f64 {
        self.snap(self.lo + u * self.range())
    }

    fn snap(&self, raw: f64) -> f64 {
        match self.step {
            Some(s) => self.lo + ((raw - self.lo) / s).round() * s,
            None => raw,
        }
    }

    fn unit(&self, raw: f64) -> f64 {
        (raw - self.lo) / self.range()
    }
}

const CONFIGS: [ConfigAttr; 6] = [
    ConfigAttr {
        name: "pZeroNominalPusch",
        technology: Technology::Lte,
        lo: -110.0,
        hi: -80.0,
        step: None,
    },
    ConfigAttr {
        name: "preambleInitialReceivedTargetPower",
        technology: Technology::Lte,
        lo: -120.0,
        hi: -90.0,
        step: Some(2.0),
    },
    ConfigAttr {
        name: "qRxLevMin",
        technology: Technology::Lte,
        lo: -140.0,
        hi: -110.0,
        step: Some(2.0),
    },
    ConfigAttr {
        name: "endcUlNrLowQualThresh",
        technology: Technology::Nr,
        lo: 0.0,
        hi: 30.0,
        step: Some(1.0),
    },
    ConfigAttr {
        name: "rachPreambleRecTargetPower",
        technology: Technology::Nr,
        lo: -120.0,
        hi: -90.0,
        step: Some(2.0),
    },
    ConfigAttr {
        name: "pMax",
        technology: Technology::Nr,
        lo: 10.0,
        hi: 33.0,
        step: None,
    },
];

const LTE_BANDWIDTHS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
const NR_BANDWIDTHS: [f64; 5] = [20.0, 40.0, 60.0, 80.0, 100.0];
/// Low, mid and high band carriers.
const LTE_CARRIERS: [f64; 3] = [6300.0, 1300.0, 3050.0];
const NR_CARRIERS: [f64; 3] = [152_600.0, 428_000.0, 636_666.0];
const BAND_EFFECT: [f64; 3] = [0.08, 0.0, -0.08];

struct Archetype {
    spread_km: f64,
    /// Planned inter-site distance in metres.
    isd_m: f64,
    height: (f64, f64),
    band_weights: [f64; 3],
    lte_bw_weights: [f64; 4],
    nr_bw_weights: [f64; 5],
    lte_proto: [f64; 3],
    nr_proto: [f64; 3],
}

const ARCHETYPES: [Archetype; 3] = [
    Archetype {
        spread_km: 1.5,
        isd_m: 500.0,
        height: (24.0, 6.0),
        band_weights: [0.2, 0.3, 0.5],
        lte_bw_weights: [0.05, 0.15, 0.3, 0.5],
        nr_bw_weights: [0.05, 0.1, 0.15, 0.2, 0.5],
        lte_proto: [0.85, 0.10, 0.15],
        nr_proto: [0.10, 0.15, 0.85],
    },
    Archetype {
        spread_km: 3.0,
        isd_m: 1500.0,
        height: (30.0, 6.0),
        band_weights: [0.34, 0.33, 0.33],
        lte_bw_weights: [0.15, 0.35, 0.3, 0.2],
        nr_bw_weights: [0.2, 0.2, 0.2, 0.2, 0.2],
        lte_proto: [0.15, 0.85, 0.10],
        nr_proto: [0.85, 0.10, 0.15],
    },
    Archetype {
        spread_km: 5.0,
        isd_m: 4000.0,
        height: (40.0, 8.0),
        band_weights: [0.6, 0.3, 0.1],
        lte_bw_weights: [0.4, 0.35, 0.15, 0.1],
        nr_bw_weights: [0.5, 0.2, 0.15, 0.1, 0.05],
        lte_proto: [0.10, 0.15, 0.85],
        nr_proto: [0.15, 0.85, 0.10],
    },
];

const CLUSTER_RING_KM: f64 = 12.0;

/// Schema shared by every generated network.
pub fn synth_schema() -> AttributeSchema {
    let mut entries = Vec::new();
    for (tech, predictors) in [
        (
            Technology::Lte,
            [
                "channelBandwidth",
                "earfcnDl",
                "antennaHeight",
                "interSiteDistance",
            ],
        ),
        (
            Technology::Nr,
            [
                "bSChannelBwDL",
                "arfcnDL",
                "antennaHeight",
                "interSiteDistance",
            ],
        ),
    ] {
        for name in predictors {
            entries.push(AttributeEntry {
                name: name.into(),
                technology: tech,
                role: Role::Predictor,
                kind: AttributeKind::Continuous,
                aggregation: None,
            });
        }
    }
    for c in &CONFIGS {
        let (kind, aggregation) = match c.step {
            Some(_) => (AttributeKind::Discrete, Aggregation::Mode),
            None => (AttributeKind::Continuous, Aggregation::Median),
        };
        entries.push(AttributeEntry {
            name: c.name.into(),
            technology: c.technology,
            role: Role::Config,
            kind,
            aggregation: Some(aggregation),
        });
    }
    AttributeSchema::new(entries).expect("static schema is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub node_id: String,
    pub cluster: usize,
    /// Position in km.
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
    pub height: f64,
    /// Planned inter-site distance in metres.
    pub isd: f64,
    /// Band index (low, mid, high) of each carrier layer.
    pub layer_bands: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub cluster: usize,
    /// Sector boresight in degrees; geometry only, not a model input.
    pub azimuth: f64,
    pub clean: BTreeMap<String, f64>,
    pub corrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub cluster: usize,
    pub corrupted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sites: Vec<SiteInfo>,
    pub cells: BTreeMap<String, CellTruth>,
    /// Config prototypes per cluster, LTE block then NR block.
    prototypes: Vec<[f64; 6]>,
}

impl GroundTruth {
    pub fn corrupted(&self) -> BTreeSet<String> {
        self.cells
            .iter()
            .filter(|(_, t)| t.corrupted)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn sidecar(&self) -> BTreeMap<String, SidecarEntry> {
        self.cells
            .iter()
            .map(|(id, t)| {
                (
                    id.clone(),
                    SidecarEntry {
                        cluster: t.cluster,
                        corrupted: t.corrupted,
                    },
                )
            })
            .collect()
    }
}

fn prototypes(spec: &SynthSpec) -> Vec<[f64; 6]> {
    (0..spec.context_clusters)
        .map(|k| {
            if k < ARCHETYPES.len() {
                let a = &ARCHETYPES[k];
                let mut p = [0.0; 6];
                p[..3].copy_from_slice(&a.lte_proto);
                p[3..].copy_from_slice(&a.nr_proto);
                p
            } else {
                let mut s = rng::substream(spec.seed, "prototype", &k.to_string());
                std::array::from_fn(|_| s.random_range(0.1..0.9))
            }
        })
        .collect()
}

fn weighted(stream: &mut Stream, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = stream.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn archetype(cluster: usize) -> &'static Archetype {
    &ARCHETYPES[cluster % ARCHETYPES.len()]
}

fn cluster_center(cluster: usize, clusters: usize) -> (f64, f64) {
    if clusters == 1 {
        return (0.0, 0.0);
    }
    let angle = std::f64::consts::TAU * cluster as f64 / clusters as f64;
    (CLUSTER_RING_KM * angle.cos(), CLUSTER_RING_KM * angle.sin())
}

fn place_site(
    node_id: String,
    cluster: usize,
    clusters: usize,
    seed: u64,
    label: &str,
) -> SiteInfo {
    let mut s = rng::substream(seed, label, &node_id);
    let a = archetype(cluster);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let (cx, cy) = cluster_center(cluster, clusters);
    let x = cx + a.spread_km * std.sample(&mut s);
    let y = cy + a.spread_km * std.sample(&mut s);
    let rotation = s.random_range(0.0..120.0f64).round();
    let height =
        ((a.height.0 + a.height.1 * std.sample(&mut s)).clamp(10.0, 60.0) * 2.0).round() / 2.0;
    let layer_bands = (0..4).map(|_| weighted(&mut s, &a.band_weights)).collect();
    let isd = ((a.isd_m * (1.0 + 0.12 * std.sample(&mut s))).max(100.0) / 10.0).round() * 10.0;
    SiteInfo {
        node_id,
        cluster,
        x,
        y,
        rotation,
        height,
        isd,
        layer_bands,
    }
}

fn site_distance_km(a: &SiteInfo, b: &SiteInfo) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

struct CellDraft {
    record: CellRecord,
    truth: CellTruth,
}

/// Builds cell `k` (per technology) of a site with clean and observed configs.
fn make_cell(
    site: &SiteInfo,
    technology: Technology,
    k: usize,
    proto: &[f64; 6],
    noise: f64,
    seed: u64,
) -> CellDraft {
    let tag = match technology {
        Technology::Lte => 'L',
        Technology::Nr => 'N',
    };
    let cell_id = format!("{}-{tag}{k}", site.node_id);
    let mut s = rng::substream(seed, "cell", &cell_id);
    let a = archetype(site.cluster);
    let sector = k % 3;
    let layer = k / 3;
    let band = site.layer_bands[layer % site.layer_bands.len()];
    let azimuth = (site.rotation + 120.0 * sector as f64) % 360.0;
    let height = ((site.height + s.random_range(-1.0..1.0f64)) * 2.0).round() / 2.0;

    let (bw_names, carriers, bandwidths, bw_weights, proto_block): (_, _, &[f64], &[f64], &[f64]) =
        match technology {
            Technology::Lte => (
                ("channelBandwidth", "earfcnDl"),
                &LTE_CARRIERS,
                &LTE_BANDWIDTHS,
                &a.lte_bw_weights,
                &proto[..3],
            ),
            Technology::Nr => (
                ("bSChannelBwDL", "arfcnDL"),
                &NR_CARRIERS,
                &NR_BANDWIDTHS,
                &a.nr_bw_weights,
                &proto[3..],
            ),
        };
    let bw_idx = weighted(&mut s, bw_weights);
    let bw_pos = bw_idx as f64 / (bandwidths.len() - 1) as f64 * 2.0 - 1.0;

    let mut raw_predictors = BTreeMap::new();
    raw_predictors.insert(bw_names.0.to_string(), bandwidths[bw_idx]);
    raw_predictors.insert(bw_names.1.to_string(), carriers[band]);
    raw_predictors.insert("antennaHeight".to_string(), height);
    raw_predictors.insert("interSiteDistance".to_string(), site.isd);

    let clean_u = [
        proto_block[0] + BAND_EFFECT[band],
        proto_block[1] + 0.06 * bw_pos,
        proto_block[2] + 0.05 * ((height - 30.0) / 15.0).clamp(-1.0, 1.0),
    ]
    .map(|u| u.clamp(0.02, 0.98));

    let attrs: Vec<&ConfigAttr> = CONFIGS
        .iter()
        .filter(|c| c.technology == technology)
        .collect();
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut clean = BTreeMap::new();
    let mut raw_configs = BTreeMap::new();
    for (attr, &u) in attrs.iter().zip(&clean_u) {
        clean.insert(attr.name.to_string(), attr.to_raw(u));
        let observed = if noise > 0.0 {
            (u + noise * gauss.sample(&mut s)).clamp(0.0, 1.0)
        } else {
            u
        };
        raw_configs.insert(attr.name.to_string(), attr.to_raw(observed));
    }

    CellDraft {
        record: CellRecord {
            cell_id,
            node_id: site.node_id.clone(),
            technology,
            raw_predictors,
            raw_configs,
        },
        truth: CellTruth {
            cluster: site.cluster,
            azimuth,
            clean,
            corrupted: false,
        },
    }
}

fn site_cells(
    site: &SiteInfo,
    counts: (usize, usize),
    proto: &[f64; 6],
    noise: f64,
    seed: u64,
) -> Vec<CellDraft> {
    let lte = (0..counts.0).map(|k| make_cell(site, Technology::Lte, k, proto, noise, seed));
    let nr = (0..counts.1).map(|k| make_cell(site, Technology::Nr, k, proto, noise, seed));
    lte.chain(nr).collect()
}

/// Ranks cross-site candidates for cell `i` by site distance, then
/// same-technology first, then index.
fn candidates_for(
    i: usize,
    cells: &[CellRecord],
    sites: &BTreeMap<String, SiteInfo>,
    pool: &[usize],
) -> Vec<usize> {
    let home = &sites[&cells[i].node_id];
    let mut list: Vec<(f64, bool, usize)> = pool
        .iter()
        .copied()
        .filter(|&j| cells[j].node_id != cells[i].node_id)
        .map(|j| {
            (
                site_distance_km(home, &sites[&cells[j].node_id]),
                cells[j].technology != cells[i].technology,
                j,
            )
        })
        .collect();
    list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    list.into_iter().map(|(_, _, j)| j).collect()
}

/// Adds inter-node edges round-robin: each initiating cell in turn links to
/// its nearest unlinked cross-site candidate until `target` edges exist.
fn link_inter_site(
    cells: &[CellRecord],
    sites: &BTreeMap<String, SiteInfo>,
    initiators: &[usize],
    pool: &[usize],
    target: usize,
    existing: &mut BTreeSet<(usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    let lists: Vec<Vec<usize>> = initiators
        .iter()
        .map(|&i| candidates_for(i, cells, sites, pool))
        .collect();
    let mut cursor = vec![0usize; initiators.len()];
    let mut added = Vec::new();
    while added.len() < target {
        let before = added.len();
        for (slot, &i) in initiators.iter().enumerate() {
            if added.len() == target {
                break;
            }
            while let Some(&j) = lists[slot].get(cursor[slot]) {
                cursor[slot] += 1;
                let key = (i.min(j), i.max(j));
                if existing.insert(key) {
                    added.push(key);
                    break;
                }
            }
        }
        if added.len() == before {
            return Err(Error::InvalidConfig(format!(
                "infeasible inter-site degree: only {} of {target} inter-node edges can be placed",
                added.len()
            )));
        }
    }
    Ok(added)
}

/// Generates a network and its ground truth. Pure in `spec`.
pub fn generate(spec: &SynthSpec) -> Result<(RanGraph, GroundTruth)> {
    spec.validate()?;
    let protos = prototypes(spec);
    let sites: Vec<SiteInfo> = (0..spec.sites)
        .map(|s| {
            place_site(
                format!("site{s:03}"),
                s % spec.context_clusters,
                spec.context_clusters,
                spec.seed,
                "site",
            )
        })
        .collect();
    let counts = spec.split_cells();

    let mut records = Vec::with_capacity(spec.total_cells());
    let mut cells = BTreeMap::new();
    for site in &sites {
        for d in site_cells(
            site,
            counts,
            &protos[site.cluster],
            spec.config_noise,
            spec.seed,
        ) {
            cells.insert(d.record.cell_id.clone(), d.truth);
            records.push(d.record);
        }
    }

    let n = records.len();
    let cross_pairs =
        n * (n - 1) / 2 - spec.sites * spec.cells_per_site * (spec.cells_per_site - 1) / 2;
    let target = (spec.inter_site_degree * n as f64 / 2.0).round() as usize;
    if target > cross_pairs {
        return Err(Error::InvalidConfig(format!(
            "infeasible inter-site degree {}: {target} inter-node edges requested, {cross_pairs} possible",
            spec.inter_site_degree
        )));
    }
    let site_map: BTreeMap<String, SiteInfo> = sites
        .iter()
        .map(|s| (s.node_id.clone(), s.clone()))
        .collect();
    let all: Vec<usize> = (0..n).collect();
    let mut existing = BTreeSet::new();
    let inter = link_inter_site(&records, &site_map, &all, &all, target, &mut existing)?;

    corrupt(spec, &mut records, &mut cells)?;

    let edges: Vec<(String, String, EdgeKind)> = inter
        .iter()
        .map(|&(i, j)| {
            (
                records[i].cell_id.clone(),
                records[j].cell_id.clone(),
                EdgeKind::InterNode,
            )
        })
        .collect();
    let graph = RanGraph::new(synth_schema(), records, &edges)?;
    Ok((
        graph,
        GroundTruth {
            sites,
            cells,
            prototypes: protos,
        },
    ))
}

/// Shifts two random config attributes of `round(rate × cells)` cells
/// upward by `magnitude × range × U(0.5, 1)`, unclipped.
fn corrupt(
    spec: &SynthSpec,
    records: &mut [CellRecord],
    truth: &mut BTreeMap<String, CellTruth>,
) -> Result<()> {
    let count = (spec.misconfig_rate * records.len() as f64).round() as usize;
    let mut s = rng::substream(spec.seed, "corrupt", "");
    let mut chosen = sample(&mut s, records.len(), count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let rec = &mut records[i];
        apply_offsets(rec, spec.misconfig_magnitude, &mut s);
        truth
            .get_mut(&rec.cell_id)
            .expect("cell has truth")
            .corrupted = true;
    }
    Ok(())
}

fn apply_offsets(rec: &mut CellRecord, magnitude: f64, s: &mut Stream) {
    let attrs: Vec<&ConfigAttr> = CONFIGS
        .iter()
        .filter(|c| c.technology == rec.technology)
        .collect();
    let picks = sample(s, attrs.len(), attrs.len().min(2));
    for k in picks {
        let attr = attrs[k];
        let mut offset = magnitude * attr.range() * s.random_range(0.5..1.0);
        if let Some(step) = attr.step {
            offset = (offset / step).ceil() * step;
        }
        if let Some(v) = rec.raw_configs.get_mut(attr.name) {
            *v += offset;
        }
    }
}

/// Moves `count` uncorrupted cells of `graph` into a corrupted state with
/// the same offset rule as the generator. Returns the new graph, truth and
/// the ids chosen.
pub fn corrupt_cells(
    graph: &RanGraph,
    truth: &GroundTruth,
    count: usize,
    magnitude: f64,
    seed: u64,
) -> Result<(RanGraph, GroundTruth, Vec<String>)> {
    let clean: Vec<usize> = (0..graph.len())
        .filter(|&i| {
            truth
                .cells
                .get(&graph.cell(i).cell_id)
                .is_some_and(|t| !t.corrupted)
        })
        .collect();
    if count > clean.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot corrupt {count} cells, only {} are uncorrupted",
            clean.len()
        )));
    }
    let mut s = rng::substream(seed, "modification", "");
    let mut picks: Vec<usize> = sample(&mut s, clean.len(), count)
        .into_iter()
        .map(|k| clean[k])
        .collect();
    picks.sort_unstable();
    let mut file = graph.to_file();
    let mut truth = truth.clone();
    let mut ids = Vec::with_capacity(count);
    for i in picks {
        let rec = &mut file.cells[i];
        apply_offsets(rec, magnitude, &mut s);
        truth
            .cells
            .get_mut(&rec.cell_id)
            .expect("cell has truth")
            .corrupted = true;
        ids.push(rec.cell_id.clone());
    }
    Ok((RanGraph::from_file_contents(file)?, truth, ids))
}

/// Adds `count` new cells to randomly chosen existing sites, each linked to
/// `round(inter_site_degree)` nearest cells on other sites.
pub fn expand(
    graph: &RanGraph,
    truth: &GroundTruth,
    spec: &SynthSpec,
    count: usize,
    seed: u64,
) -> Result<(RanGraph, GroundTruth, Vec<String>)> {
    let mut s = rng::substream(seed, "expansion", "");
    let mut file = graph.to_file();
    let mut truth = truth.clone();
    let site_map: BTreeMap<String, SiteInfo> = truth
        .sites
        .iter()
        .map(|x| (x.node_id.clone(), x.clone()))
        .collect();
    let mut new_ids = Vec::with_capacity(count);
    for _ in 0..count {
        let site = &truth.sites[s.random_range(0..truth.sites.len())];
        let technology = if s.random_range(0..spec.lte_ratio + spec.nr_ratio) < spec.lte_ratio {
            Technology::Lte
        } else {
            Technology::Nr
        };
        let taken = file
            .cells
            .iter()
            .filter(|c| c.node_id == site.node_id && c.technology == technology)
            .count();
        let d = make_cell(
            site,
            technology,
            taken,
            &truth.prototypes[site.cluster],
            spec.config_noise,
            seed,
        );
        new_ids.push(d.record.cell_id.clone());
        truth.cells.insert(d.record.cell_id.clone(), d.truth);
        file.cells.push(d.record);
    }
    attach(file, truth, &site_map, &new_ids, spec.inter_site_degree)
}

/// Adds `sites` whole new sites in existing cluster areas. New cells link
/// to the existing network through inter-node edges only.
pub fn greenfield(
    graph: &RanGraph,
    truth: &GroundTruth,
    spec: &SynthSpec,
    sites: usize,
    seed: u64,
) -> Result<(RanGraph, GroundTruth, Vec<String>)> {
    let mut file = graph.to_file();
    let mut truth = truth.clone();
    let clusters = truth.prototypes.len();
    let start = truth.sites.len();
    let mut s = rng::substream(seed, "greenfield", "");
    let mut added = Vec::with_capacity(sites);
    for k in 0..sites {
        let cluster = s.random_range(0..clusters);
        let site = place_site(
            format!("site{:03}", start + k),
            cluster,
            clusters,
            seed,
            "greenfield-site",
        );
        added.push(site);
    }
    truth.sites.extend(added.iter().cloned());
    let site_map: BTreeMap<String, SiteInfo> = truth
        .sites
        .iter()
        .map(|x| (x.node_id.clone(), x.clone()))
        .collect();
    let mut new_ids = Vec::new();
    for site in &added {
        for d in site_cells(
            site,
            spec.split_cells(),
            &truth.prototypes[site.cluster],
            spec.config_noise,
            seed,
        ) {
            new_ids.push(d.record.cell_id.clone());
            truth.cells.insert(d.record.cell_id.clone(), d.truth);
            file.cells.push(d.record);
        }
    }
    attach(file, truth, &site_map, &new_ids, spec.inter_site_degree)
}

/// Links each new cell to its nearest pre-existing cells on other sites.
fn attach(
    mut file: crate::graph::NetworkFile,
    truth: GroundTruth,
    site_map: &BTreeMap<String, SiteInfo>,
    new_ids: &[String],
    degree: f64,
) -> Result<(RanGraph, GroundTruth, Vec<String>)> {
    let per_cell = degree.round() as usize;
    let n_old = file.cells.len() - new_ids.len();
    let pool: Vec<usize> = (0..n_old).collect();
    for i in n_old..file.cells.len() {
        let picks = candidates_for(i, &file.cells, site_map, &pool);
        for &j in picks.iter().take(per_cell) {
            file.edges.push((
                file.cells[i].cell_id.clone(),
                file.cells[j].cell_id.clone(),
                EdgeKind::InterNode,
            ));
        }
    }
    Ok((RanGraph::from_file_contents(file)?, truth, new_ids.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityReport {
    /// Mean cosine of the cluster-mean predictor against observed configs.
    pub oracle_accuracy: f64,
    pub threshold: f64,
    pub learnable: bool,
    pub cells_scored: usize,
}

/// Scores the trivial predictor "mean observed config of the cell's
/// cluster and technology" on uncorrupted cells, in range-normalized units.
pub fn learnability_check(graph: &RanGraph, truth: &GroundTruth) -> LearnabilityReport {
    let unit_configs = |cell: &CellRecord| -> Vec<f64> {
        CONFIGS
            .iter()
            .filter(|c| c.technology == cell.technology)
            .map(|c| cell.raw_configs.get(c.name).map_or(0.0, |&v| c.unit(v)))
            .collect()
    };
    let mut groups: BTreeMap<(usize, Technology), Vec<Vec<f64>>> = BTreeMap::new();
    let mut scored = Vec::new();
    for cell in graph.cells() {
        let Some(t) = truth.cells.get(&cell.cell_id) else {
            continue;
        };
        if t.corrupted {
            continue;
        }
        let u = unit_configs(cell);
        groups
            .entry((t.cluster, cell.technology))
            .or_default()
            .push(u.clone());
        scored.push(((t.cluster, cell.technology), u));
    }
    let means: BTreeMap<(usize, Technology), Vec<f64>> = groups
        .into_iter()
        .map(|(key, rows)| {
            let n = rows.len() as f64;
            let mut m = vec![0.0; rows[0].len()];
            for r in &rows {
                for (a, v) in m.iter_mut().zip(r) {
                    *a += v / n;
                }
            }
            (key, m)
        })
        .collect();
    let cosines: Vec<f64> = scored
        .iter()
        .filter_map(|(key, u)| cosine(u, &means[key]).ok())
        .collect();
    let oracle_accuracy = if cosines.is_empty() {
        0.0
    } else {
        cosines.iter().sum::<f64>() / cosines.len() as f64
    };
    LearnabilityReport {
        oracle_accuracy,
        threshold: LEARNABILITY_THRESHOLD,
        learnable: oracle_accuracy >= LEARNABILITY_THRESHOLD,
        cells_scored: cosines.len(),
    }
}
