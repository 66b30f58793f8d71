use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use elnn_core::calibrate::{
    calibrate_parametric, elnn_report, parametric_report, prepare_target, stability_summary,
    BucketErrors, CalibrationReport, ElnnRunConfig, Family, FittedParams, SimplexOptions,
    StabilityRow,
};
use elnn_core::elnn::{implied_levy_density, phi_model, train, ElnnParams};
use elnn_core::io::{self, GridMeta};
use elnn_core::levy_models::ModelDocument;
use elnn_core::market::{
    generate_virtual_market, ingest_quotes, moment_table, simulate_path, to_time_values, MarketSlice,
    MomentRow, NoiseSpec, QuoteFilter, StrikeSampler,
};
use elnn_core::spectral::{SpectralGrid, SpectralPoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::manifest::Recorder;
use crate::{CalibrateArgs, DensityArgs, MomentsArgs, ReportArgs, SimulateArgs};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(elnn_core::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<elnn_core::Error> for CliError {
    fn from(e: elnn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_config<C: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<C> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(C::default()),
    }
}

fn set<T>(field: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *field = v;
    }
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| CliError::Config(format!("missing {what}")))
}

fn read_model(path: &Path) -> Result<ModelDocument> {
    io::read_json(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Index of a market directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketIndex {
    pub t: f64,
    pub r: f64,
    pub slices: Vec<SliceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceEntry {
    pub label: String,
    pub file: String,
}

fn write_market(dir: &Path, slices: &[MarketSlice]) -> Result<Vec<String>> {
    let first = slices
        .first()
        .ok_or_else(|| CliError::Config("market has no slices".into()))?;
    ensure_dir(&dir.join("slices"))?;
    let mut entries = Vec::new();
    for s in slices {
        let file = format!("slices/{}.csv", s.label);
        io::write_time_values(io::create(&dir.join(&file))?, &s.samples)?;
        entries.push(SliceEntry {
            label: s.label.clone(),
            file,
        });
    }
    let index = MarketIndex {
        t: first.t,
        r: first.r,
        slices: entries,
    };
    io::write_json(&dir.join("market.json"), &index)?;
    Ok(vec!["market.json".into(), "slices/*.csv".into()])
}

fn read_market(dir: &Path) -> Result<Vec<MarketSlice>> {
    let index: MarketIndex = io::read_json(&dir.join("market.json"))
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.join("market.json").display())))?;
    index
        .slices
        .iter()
        .map(|e| {
            let samples = io::read_time_values(io::open(&dir.join(&e.file))?)?;
            Ok(MarketSlice::new(e.label.clone(), index.t, index.r, samples))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Option<PathBuf>,
    pub days: usize,
    pub per_day: usize,
    pub maturity: f64,
    pub rate: f64,
    pub noise: f64,
    pub seed: u64,
    pub strikes: StrikeSampler,
    pub grid: SpectralGrid,
    pub out: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: None,
            days: 1000,
            per_day: 100,
            maturity: 0.05,
            rate: 0.02,
            noise: 0.05,
            seed: 0,
            strikes: StrikeSampler::default(),
            grid: SpectralGrid::default(),
            out: PathBuf::from("market"),
        }
    }
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let rec = Recorder::start("simulate");
    let mut cfg: SimulateConfig = load_config(&args.config)?;
    if args.model.is_some() {
        cfg.model = args.model;
    }
    set(&mut cfg.days, args.days);
    set(&mut cfg.per_day, args.per_day);
    set(&mut cfg.maturity, args.maturity);
    set(&mut cfg.rate, args.rate);
    set(&mut cfg.noise, args.noise);
    set(&mut cfg.seed, args.seed);
    set(&mut cfg.out, args.out);
    if cfg.days == 0 || cfg.per_day == 0 {
        return Err(CliError::Config("days and per-day must be positive".into()));
    }
    let model_path = require(&cfg.model, "--model")?;
    let triplet = read_model(&model_path)?.triplet()?;
    let noise = NoiseSpec {
        scale: cfg.noise,
        seed: cfg.seed,
    };
    let slices = generate_virtual_market(
        &triplet,
        cfg.days,
        cfg.per_day,
        cfg.maturity,
        cfg.rate,
        &cfg.strikes,
        &noise,
        &cfg.grid,
    )?;
    ensure_dir(&cfg.out)?;
    let outputs = write_market(&cfg.out, &slices)?;
    rec.finish(&cfg.out, &cfg, Some(cfg.seed), vec![display(&model_path)], outputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Elnn,
    Merton,
    Kou,
}

impl std::str::FromStr for Method {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elnn" => Ok(Method::Elnn),
            "merton" => Ok(Method::Merton),
            "kou" => Ok(Method::Kou),
            other => Err(CliError::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub market: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
    pub rate: f64,
    pub maturity_days: Option<i64>,
    pub filter: QuoteFilter,
    pub method: Method,
    pub label: Option<String>,
    pub run: ElnnRunConfig,
    pub simplex: SimplexOptions,
    pub out: PathBuf,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            market: None,
            quotes: None,
            rate: 0.02,
            maturity_days: None,
            filter: QuoteFilter::default(),
            method: Method::Elnn,
            label: None,
            run: ElnnRunConfig::default(),
            simplex: SimplexOptions::default(),
            out: PathBuf::from("calibration"),
        }
    }
}

fn load_quotes(cfg: &CalibrateConfig, path: &Path, label: &str) -> Result<Vec<MarketSlice>> {
    let (quotes, counts) = ingest_quotes(io::open(path)?, &cfg.filter)?;
    let quotes: Vec<_> = match cfg.maturity_days {
        Some(d) => quotes
            .into_iter()
            .filter(|q| (q.maturity * elnn_core::market::TRADING_DAYS).round() as i64 == d)
            .collect(),
        None => quotes,
    };
    let (slice, clamped) = to_time_values(&quotes, cfg.rate, label)?;
    eprintln!(
        "ingested {} quotes ({} filtered out, {} used, {} time values clamped at zero)",
        counts.kept + counts.dropped,
        counts.dropped,
        quotes.len(),
        clamped
    );
    Ok(vec![slice])
}

fn table_row(label: &str, r: &CalibrationReport) -> Vec<String> {
    let cells = |b: &BucketErrors| {
        b.buckets
            .iter()
            .map(|(_, v)| v.map_or(String::new(), |x| format!("{x:.6}")))
            .chain(std::iter::once(format!("{:.6}", b.sum)))
            .collect::<Vec<_>>()
    };
    let mut row = vec![label.to_string()];
    row.extend(cells(&r.errors.z));
    row.extend(cells(&r.errors.re_phi));
    row.extend(cells(&r.errors.im_phi));
    row
}

fn table_header(r: &CalibrationReport) -> Vec<String> {
    let mut h = vec!["label".to_string()];
    for (prefix, b) in [("z", &r.errors.z), ("re", &r.errors.re_phi), ("im", &r.errors.im_phi)] {
        h.extend(b.buckets.iter().map(|(n, _)| format!("{prefix}_{n}")));
        h.push(format!("{prefix}_Sum"));
    }
    h
}

fn write_table(path: &Path, reports: &[&CalibrationReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if let Some(first) = reports.first() {
        w.write_record(table_header(first))?;
    }
    for r in reports {
        w.write_record(table_row(&r.label, r))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(io::create(path)?))
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let rec = Recorder::start("calibrate");
    let mut cfg: CalibrateConfig = load_config(&args.config)?;
    if args.market.is_some() {
        cfg.market = args.market;
    }
    if args.quotes.is_some() {
        cfg.quotes = args.quotes;
    }
    if args.maturity_days.is_some() {
        cfg.maturity_days = args.maturity_days;
    }
    if args.label.is_some() {
        cfg.label = args.label;
    }
    if let Some(m) = args.method {
        cfg.method = m.parse()?;
    }
    set(&mut cfg.rate, args.rate);
    let t = &mut cfg.run.train;
    set(&mut t.m_cutoff, args.m_cutoff);
    set(&mut t.alpha_reg, args.alpha);
    set(&mut t.beta_reg, args.beta);
    set(&mut t.epochs, args.epochs);
    set(&mut t.n_nodes, args.nodes);
    set(&mut t.learning_rate, args.learning_rate);
    set(&mut t.seed, args.seed);
    let a = &mut cfg.run.amplification;
    set(&mut a.n_groups, args.groups);
    set(&mut a.group_size, args.group_size);
    set(&mut a.seed, args.amplify_seed);
    set(&mut cfg.simplex.budget, args.budget);
    set(&mut cfg.out, args.out);
    cfg.run.train.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let (slices, input) = match (&cfg.market, &cfg.quotes) {
        (Some(m), None) => (read_market(m)?, m.clone()),
        (None, Some(q)) => {
            let label = cfg.label.clone().unwrap_or_else(|| "quotes".into());
            (load_quotes(&cfg, q, &label)?, q.clone())
        }
        _ => return Err(CliError::Config("give exactly one of --market or --quotes".into())),
    };
    let label = cfg.label.clone().unwrap_or_else(|| {
        input
            .file_stem()
            .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let r = slices[0].r;
    let grid = cfg.run.grid;
    let target = prepare_target(&slices, &cfg.run.amplification, &grid)?;
    let window = cfg.run.train.data_window(&grid);
    ensure_dir(&cfg.out)?;
    let out = &cfg.out;
    let mut outputs = vec!["params.json", "report.json", "report.csv", "target.csv", "fitted.csv", "grid.json"];

    let (mut report, fitted): (CalibrationReport, Vec<SpectralPoint>) = match cfg.method {
        Method::Elnn => {
            let trained = train(&target, &cfg.run.train, None)?;
            io::write_loss(io::create(&out.join("loss.csv"))?, &trained.loss)?;
            outputs.push("loss.csv");
            let mut report = elnn_report(&trained.params, &target, &slices, r, &label, &cfg.run)?;
            report.loss_trace = Some("loss.csv".into());
            let t = target.maturity();
            let fitted = grid
                .w_nodes()
                .into_iter()
                .map(|w| SpectralPoint {
                    w,
                    value: phi_model(w, &trained.params, t),
                })
                .collect();
            (report, fitted)
        }
        Method::Merton | Method::Kou => {
            let family = if cfg.method == Method::Merton { Family::Merton } else { Family::Kou };
            let fit = calibrate_parametric(family, &target, window, None, &cfg.simplex)?;
            let report = parametric_report(&fit, &target, &slices, r, &label, &cfg.run.buckets)?;
            let triplet = fit.model.triplet()?;
            let t = target.maturity();
            let fitted = grid
                .w_nodes()
                .into_iter()
                .map(|w| Ok(SpectralPoint { w, value: triplet.shifted_char_fn(w, t)? }))
                .collect::<elnn_core::Result<_>>()?;
            (report, fitted)
        }
    };
    report.label = label;
    io::write_json(&out.join("params.json"), &report.params)?;
    io::write_json(&out.join("report.json"), &report)?;
    write_table(&out.join("report.csv"), &[&report])?;
    io::write_spectral(io::create(&out.join("target.csv"))?, &target.points())?;
    io::write_spectral(io::create(&out.join("fitted.csv"))?, &fitted)?;
    io::write_json(&out.join("grid.json"), &GridMeta::from(&grid))?;
    eprintln!(
        "{}: sigma = {:.6}, lambda = {:.6}, spectral loss = {:.6e}",
        report.label, report.sigma, report.lambda, report.spectral_loss
    );
    rec.finish(
        out,
        &cfg,
        Some(cfg.run.train.seed),
        vec![display(&input)],
        outputs.into_iter().map(String::from).collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub params: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub x_window: f64,
    pub grid: SpectralGrid,
    pub out: PathBuf,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            params: None,
            model: None,
            x_window: 1.0,
            grid: SpectralGrid::default(),
            out: PathBuf::from("density"),
        }
    }
}

fn density_curve(params: &FittedParams, grid: &SpectralGrid, x_window: f64) -> Result<Vec<(f64, f64)>> {
    match params {
        FittedParams::Elnn(p) => Ok(implied_levy_density(p, grid, x_window)?),
        FittedParams::Parametric(m) => {
            let d = m.density()?;
            Ok(grid
                .k_nodes()
                .into_iter()
                .filter(|x| x.abs() <= x_window)
                .map(|x| (x, d.pdf(x)))
                .collect())
        }
    }
}

fn read_params(path: &Path) -> Result<FittedParams> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Ok(p) = serde_json::from_str::<FittedParams>(&text) {
        return Ok(p);
    }
    serde_json::from_str::<ElnnParams>(&text)
        .map(FittedParams::Elnn)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn density(args: DensityArgs) -> Result<()> {
    let rec = Recorder::start("density");
    let mut cfg: DensityConfig = load_config(&args.config)?;
    if args.params.is_some() {
        cfg.params = args.params;
    }
    if args.model.is_some() {
        cfg.model = args.model;
    }
    set(&mut cfg.x_window, args.x_window);
    set(&mut cfg.out, args.out);
    if !(cfg.x_window > 0.0) {
        return Err(CliError::Config("x-window must be positive".into()));
    }
    let (params, input) = match (&cfg.params, &cfg.model) {
        (Some(p), None) => (read_params(p)?, p.clone()),
        (None, Some(m)) => (FittedParams::Parametric(read_model(m)?), m.clone()),
        _ => return Err(CliError::Config("give exactly one of --params or --model".into())),
    };
    let curve = density_curve(&params, &cfg.grid, cfg.x_window)?;
    ensure_dir(&cfg.out)?;
    io::write_density(io::create(&cfg.out.join("density.csv"))?, &curve)?;
    rec.finish(&cfg.out, &cfg, None, vec![display(&input)], vec!["density.csv".into()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub prices: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub horizons: Vec<usize>,
    pub out: PathBuf,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            prices: None,
            model: None,
            steps: 1_000_000,
            dt: 1.0 / 252.0,
            seed: 0,
            horizons: vec![1, 2, 4, 8, 16, 32],
            out: PathBuf::from("moments"),
        }
    }
}

#[derive(Deserialize)]
struct PriceRow {
    price: f64,
}

fn read_prices(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(io::open(path)?);
    r.deserialize::<PriceRow>()
        .enumerate()
        .map(|(i, row)| {
            row.map(|p| p.price).map_err(|e| {
                CliError::Core(elnn_core::Error::Parse {
                    line: i as u64 + 2,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.10e}"))
}

fn write_moments(path: &Path, rows: &[MomentRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["horizon".to_string(), "count".to_string()];
    for prefix in ["emp", "levy", "gauss"] {
        for m in ["mean", "std", "skew", "kurt"] {
            header.push(format!("{prefix}_{m}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut cells = vec![r.horizon.to_string(), r.count.to_string()];
        for m in [Some(r.empirical), r.levy, r.gaussian] {
            match m {
                Some(m) => cells.extend([
                    fmt_opt(Some(m.mean)),
                    fmt_opt(Some(m.std_dev)),
                    fmt_opt(m.skewness),
                    fmt_opt(m.excess_kurtosis),
                ]),
                None => cells.extend(std::iter::repeat_n("NA".to_string(), 4)),
            }
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub fn moments(args: MomentsArgs) -> Result<()> {
    let rec = Recorder::start("moments");
    let mut cfg: MomentsConfig = load_config(&args.config)?;
    if args.prices.is_some() {
        cfg.prices = args.prices;
    }
    if args.model.is_some() {
        cfg.model = args.model;
    }
    set(&mut cfg.steps, args.steps);
    set(&mut cfg.dt, args.dt);
    set(&mut cfg.seed, args.seed);
    set(&mut cfg.horizons, args.horizons);
    set(&mut cfg.out, args.out);
    let model = cfg.model.as_deref().map(read_model).transpose()?;
    let mut inputs = Vec::new();
    let prices = match (&cfg.prices, &model) {
        (Some(p), _) => {
            inputs.push(display(p));
            read_prices(p)?
        }
        (None, Some(m)) => {
            let parametric = m
                .parametric()
                .ok_or_else(|| CliError::Config("path simulation needs a merton or kou model".into()))?;
            simulate_path(&parametric, cfg.steps, cfg.dt, 1.0, cfg.seed)?
        }
        (None, None) => return Err(CliError::Config("give --prices or --model".into())),
    };
    if let Some(m) = &cfg.model {
        inputs.push(display(m));
    }
    if cfg.horizons.iter().any(|&h| h == 0 || h >= prices.len()) {
        return Err(CliError::Config(format!(
            "horizons must lie in 1..{} for a series of {} prices",
            prices.len(),
            prices.len()
        )));
    }
    let triplet = model.as_ref().map(|m| m.triplet()).transpose()?;
    let rows = moment_table(&prices, &cfg.horizons, triplet.as_ref().map(|t| (t, cfg.dt)))?;
    ensure_dir(&cfg.out)?;
    write_moments(&cfg.out.join("moments.csv"), &rows)?;
    let seed = cfg.prices.is_none().then_some(cfg.seed);
    rec.finish(&cfg.out, &cfg, seed, inputs, vec!["moments.csv".into()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub runs: Vec<PathBuf>,
    pub x_window: f64,
    pub grid: SpectralGrid,
    pub out: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            runs: Vec::new(),
            x_window: 0.3,
            grid: SpectralGrid::default(),
            out: PathBuf::from("report"),
        }
    }
}

pub fn report(args: ReportArgs) -> Result<()> {
    let rec = Recorder::start("report");
    let mut cfg: ReportConfig = load_config(&args.config)?;
    set(&mut cfg.runs, args.runs);
    set(&mut cfg.x_window, args.x_window);
    set(&mut cfg.out, args.out);
    if cfg.runs.is_empty() {
        return Err(CliError::Config("no runs given".into()));
    }
    let reports = cfg
        .runs
        .iter()
        .map(|dir| {
            let path = dir.join("report.json");
            io::read_json::<CalibrationReport>(&path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&cfg.out)?;
    let mut outputs = vec!["table.csv".to_string()];
    write_table(&cfg.out.join("table.csv"), &reports.iter().collect::<Vec<_>>())?;
    for r in &reports {
        let file = format!("density_{}.csv", r.label);
        let curve = density_curve(&r.params, &cfg.grid, cfg.x_window)?;
        io::write_density(io::create(&cfg.out.join(&file))?, &curve)?;
        outputs.push(file);
    }
    if reports.len() >= 2 {
        let rows: Vec<StabilityRow> = reports.iter().map(StabilityRow::from).collect();
        let summary = stability_summary(&rows)?;
        io::write_json(&cfg.out.join("stability.json"), &summary)?;
        let mut w = csv_writer(&cfg.out.join("stability.csv"))?;
        w.write_record(["label", "sigma", "lambda"])?;
        for row in &summary.rows {
            w.write_record([row.label.clone(), format!("{:.10}", row.sigma), format!("{:.10}", row.lambda)])?;
        }
        w.write_record(["cv".to_string(), format!("{:.10}", summary.sigma_cv), format!("{:.10}", summary.lambda_cv)])?;
        w.flush()?;
        outputs.extend(["stability.json".into(), "stability.csv".into()]);
    }
    let inputs = cfg.runs.iter().map(|p| display(p)).collect();
    rec.finish(&cfg.out, &cfg, None, inputs, outputs)
}
