use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tpad::attack::{
    destructive_detection_probability, destructive_monte_carlo, parse_attacks, run_attack_file, run_campaign,
    AttackFree, AttackGenerator, PinDataFlips, SingleOutputFlip, UniformLogicFlips,
};
use tpad::chip::bundle::{load_chip, save_chip};
use tpad::chip::{build_protected_chip, random_ram_request, ChipOptions, RamParams, Testbench};
use tpad::fft::{
    calibrate_threshold, fft_attack_campaign, reference_selftest, EngineAttack, FftAttackGenerator, FftEngine,
    PlancherelReference, SelftestVerdict,
};
use tpad::harness::run_sweep;
use tpad::lfsr::{is_primitive, standard_primitive, Lfsr, LfsrSpec};
use tpad::netlist::{parse_netlist, Netlist};
use tpad::parity::sample_parity_code;
use tpad::stats::trial_rng;
use tpad::switchbox::{insert_switchboxes, InsertOptions};
use tpad::{chip::CycleFaults, library, BitVector};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "tpad", version, about = "Trojan prevention and detection lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a randomized parity-check matrix
    GenCode {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Obfuscate a combinational netlist with switchboxes
    InsertSb {
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// netlist file, or a built-in name (c17, full_adder, alu2, adderN)
        #[arg(long = "in")]
        input: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config_out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_iterations: usize,
    },
    /// Build a protected chip bundle
    BuildChip(BuildChip),
    /// Simulate an untampered chip bundle
    Run {
        #[arg(long)]
        chip: PathBuf,
        #[arg(long, default_value_t = 1000)]
        cycles: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace_csv: Option<PathBuf>,
    },
    /// Run an attack campaign against a chip bundle
    Attack {
        #[arg(long)]
        chip: PathBuf,
        /// descriptor file; without it `--generator` picks random attacks
        #[arg(long)]
        attacks: Option<PathBuf>,
        /// none | logic | single_output | pin_data
        #[arg(long, default_value = "logic")]
        generator: String,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 64)]
        cycles: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// FFT engine with Plancherel checking
    Fft(FftCmd),
    /// Destructive-sampling detection probability
    Destructive {
        #[arg(long = "n")]
        n: u64,
        #[arg(long)]
        a: u64,
        #[arg(long)]
        t: u64,
        /// also estimate by sampling without replacement
        #[arg(long, default_value_t = 0)]
        mc_trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment spec and print CSV
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LFSR utilities
    Lfsr {
        #[arg(long = "L")]
        degree: u32,
        /// feedback polynomial as a hex mask (default: built-in primitive)
        #[arg(long)]
        poly: Option<String>,
        #[arg(long)]
        check_primitive: bool,
        /// print this many tap words
        #[arg(long, default_value_t = 0)]
        steps: u64,
        #[arg(long, default_value = "1")]
        seed: String,
        #[arg(long, default_value = "0,1,2")]
        taps: String,
    },
}

#[derive(Args)]
struct BuildChip {
    /// netlist file, or a built-in name (c17, full_adder, alu2, adderN)
    #[arg(long = "in")]
    input: String,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    lfsr_degree: u32,
    #[arg(long, default_value_t = 0)]
    pipeline_stages: usize,
    /// RAM as addr_bits,word_bits
    #[arg(long)]
    ram: Option<String>,
    /// output subsets, e.g. "0,1;2,3"
    #[arg(long)]
    subsets: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FftCmd {
    #[arg(long = "n", default_value_t = 128)]
    n: usize,
    #[arg(long)]
    calibrate: bool,
    #[arg(long)]
    selftest: bool,
    /// attack_free | butterfly_flip | butterfly_flip_any_bit | permute |
    /// plancherel_preserving | zero_reference
    #[arg(long)]
    campaign: Option<String>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 2.0)]
    margin: f64,
    /// threshold; calibrated when absent
    #[arg(long)]
    threshold: Option<f64>,
    /// run the self-test against a zeroed reference
    #[arg(long)]
    zeroed: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// write the reference pair as hex
    #[arg(long)]
    reference_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_netlist(arg: &str) -> Res<Netlist> {
    if Path::new(arg).exists() {
        return Ok(parse_netlist(&fs::read_to_string(arg)?)?);
    }
    library::by_name(arg).ok_or_else(|| format!("`{arg}` is neither a file nor a built-in circuit").into())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Res<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_u64(s: &str) -> Res<u64> {
    let s = s.trim();
    Ok(match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16)?,
        None => s.parse()?,
    })
}

fn build_chip(b: BuildChip) -> Res<()> {
    let f = load_netlist(&b.input)?;
    let lfsr = LfsrSpec::standard(b.lfsr_degree, b.seed | 1, (0..b.r).collect())?;
    let mut opts = ChipOptions {
        pipeline_stages: b.pipeline_stages,
        ..ChipOptions::default()
    };
    if let Some(ram) = b.ram {
        let (a, w) = ram.split_once(',').ok_or("--ram expects addr_bits,word_bits")?;
        opts.ram = Some(RamParams {
            addr_bits: a.trim().parse()?,
            word_bits: w.trim().parse()?,
            r: b.r,
        });
    }
    if let Some(s) = b.subsets {
        opts.output_subsets = s
            .split(';')
            .map(|g| g.split(',').map(|v| v.trim().parse()).collect::<Result<Vec<usize>, _>>())
            .collect::<Result<_, _>>()?;
    }
    let chip = build_protected_chip(&f, b.r, b.t, lfsr, b.seed, &opts)?;
    save_chip(&chip, &b.out)?;
    println!(
        "wrote {} ({} outputs in {} port(s), {} switchboxes)",
        b.out.display(),
        chip.f.num_outputs(),
        chip.outputs.len(),
        chip.total_switchboxes()
    );
    Ok(())
}

fn run_chip(chip: PathBuf, cycles: u64, seed: u64, trace: Option<PathBuf>) -> Res<bool> {
    let chip = load_chip(&chip)?;
    let mut st = chip.reset();
    let mut bench = Testbench::new(&chip);
    let mut rng = trial_rng(seed, 0);
    let mut csv = String::from("cycle,inputs,error_signal,taps,monitor_attack,receiver_attack");
    for p in 0..chip.outputs.len() {
        let _ = write!(csv, ",data{p},check{p}");
    }
    csv.push('\n');
    let mut reports = 0u64;
    for c in 0..cycles {
        let data = BitVector::random(chip.f.num_inputs(), &mut rng);
        let ram = chip.ram.as_ref().map(|(p, _)| random_ram_request(p, &mut rng));
        let cyc = bench.step(&chip, &mut st, data.clone(), ram, &CycleFaults::default())?;
        reports += cyc.detected() as u64;
        if trace.is_some() {
            let o = &cyc.output;
            let _ = write!(
                csv,
                "{c},{},{},{},{},{}",
                data.to_bit_string(),
                o.error_signal.to_bit_string(),
                o.taps.to_bit_string(),
                o.monitor_attack as u8,
                cyc.receiver_attack.iter().any(|&a| a) as u8
            );
            for (d, k) in &o.ports {
                let _ = write!(csv, ",{},{}", d.to_bit_string(), k.to_bit_string());
            }
            csv.push('\n');
        }
    }
    if let Some(p) = trace {
        fs::write(p, csv)?;
    }
    println!("cycles = {cycles}\nreports = {reports}");
    Ok(reports == 0)
}

fn attack(
    chip: PathBuf,
    attacks: Option<PathBuf>,
    generator: &str,
    trials: u64,
    cycles: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Res<()> {
    let chip = load_chip(&chip)?;
    let report = match attacks {
        Some(p) => run_attack_file(&chip, &parse_attacks(&fs::read_to_string(p)?)?, trials, cycles, seed)?,
        None => {
            let g: &dyn AttackGenerator = match generator {
                "none" => &AttackFree,
                "logic" => &UniformLogicFlips,
                "single_output" => &SingleOutputFlip,
                "pin_data" => &PinDataFlips,
                other => return Err(format!("unknown generator `{other}`").into()),
            };
            run_campaign(&chip, g, trials, cycles, seed)?
        }
    };
    emit(&out, &report.to_csv())?;
    eprintln!("{}", report.summary());
    Ok(())
}

fn fft(c: FftCmd) -> Res<bool> {
    let reference = PlancherelReference::white_noise(c.n, c.seed)?;
    if let Some(p) = &c.reference_out {
        reference.save(p)?;
    }
    let threshold = match c.threshold {
        Some(t) => t,
        None => calibrate_threshold(c.n, c.trials.max(100), c.margin, c.seed)?,
    };
    let mut ok = true;
    if c.calibrate || !(c.selftest || c.campaign.is_some()) {
        println!("threshold = {threshold}");
    }
    if c.selftest {
        let mut engine = FftEngine::new(reference.clone(), threshold);
        if c.zeroed {
            engine = engine.with_attack(EngineAttack::ZeroReference);
        }
        let v = reference_selftest(&engine, &PlancherelReference::non_pair(c.n, c.seed ^ 1)?)?;
        println!(
            "selftest = {}",
            match v {
                SelftestVerdict::CheckerAlive => "checker alive",
                SelftestVerdict::CheckerCompromised => "checker compromised",
            }
        );
        ok &= v == SelftestVerdict::CheckerAlive;
    }
    if let Some(g) = &c.campaign {
        let g = FftAttackGenerator::parse(g).ok_or_else(|| format!("unknown FFT attack `{g}`"))?;
        let report = fft_attack_campaign(c.n, g, c.trials, threshold, c.seed)?;
        emit(&c.out, &report.to_csv())?;
        eprintln!("threshold = {threshold}\n{}", report.summary());
    }
    Ok(ok)
}

fn lfsr(degree: u32, poly: Option<String>, check: bool, steps: u64, seed: &str, taps: &str) -> Res<bool> {
    let poly = match poly {
        Some(p) => u128::from_str_radix(p.trim_start_matches("0x"), 16)?,
        None => standard_primitive(degree).ok_or_else(|| format!("no built-in polynomial for L = {degree}"))?,
    };
    let mut ok = true;
    if check {
        let p = is_primitive(poly, degree)?;
        println!("primitive = {p}");
        ok = p;
    }
    if steps > 0 {
        let taps: Vec<usize> = taps.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>()?;
        let spec = LfsrSpec::new(degree, poly, parse_u64(seed)?, taps)?;
        print!("{}", spec.to_text());
        let mut l = Lfsr::new(spec);
        for _ in 0..steps {
            println!("{}", l.taps().to_bit_string());
            l.advance();
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Res<bool> = match cli.cmd {
        Cmd::GenCode { k, r, seed, out } => {
            sample_parity_code(k, r, seed).map_err(Into::into).and_then(|c| emit(&out, &c.to_text())).map(|_| true)
        }
        Cmd::InsertSb {
            t,
            seed,
            input,
            out,
            config_out,
            max_iterations,
        } => (|| {
            let n = load_netlist(&input)?;
            let mut opts = InsertOptions::new(t, seed);
            opts.max_iterations = max_iterations;
            let obf = insert_switchboxes(&n, &opts)?;
            fs::write(&out, obf.to_text())?;
            fs::write(&config_out, obf.intended.to_text())?;
            println!("inserted {} switchboxes", obf.num_switchboxes());
            Ok(true)
        })(),
        Cmd::BuildChip(b) => build_chip(b).map(|_| true),
        Cmd::Run {
            chip,
            cycles,
            seed,
            trace_csv,
        } => run_chip(chip, cycles, seed, trace_csv),
        Cmd::Attack {
            chip,
            attacks,
            generator,
            trials,
            cycles,
            seed,
            out,
        } => attack(chip, attacks, &generator, trials, cycles, seed, out).map(|_| true),
        Cmd::Fft(c) => fft(c),
        Cmd::Destructive { n, a, t, mc_trials, seed } => (|| {
            println!("p = {}", destructive_detection_probability(n, a, t)?);
            if mc_trials > 0 {
                let p = destructive_monte_carlo(n, a, t, mc_trials, seed)?;
                let (lo, hi) = p.wilson(1.96);
                println!("monte_carlo = {} [{lo}, {hi}] over {mc_trials} trials", p.rate());
            }
            Ok(true)
        })(),
        Cmd::Sweep { spec, out } => (|| {
            let csv = run_sweep(&fs::read_to_string(spec)?)?;
            emit(&out, &csv)?;
            Ok(true)
        })(),
        Cmd::Lfsr {
            degree,
            poly,
            check_primitive,
            steps,
            seed,
            taps,
        } => lfsr(degree, poly, check_primitive, steps, &seed, &taps),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
