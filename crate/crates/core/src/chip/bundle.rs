//! On-disk chip bundles: one directory holding every netlist, intended
//! switchbox configuration, code and parameter, plus a SHA-256 manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ChipError, InputPort, OutputPort, ProtectedChip, RamParams};
use crate::bits::BitVector;
use crate::lfsr::LfsrSpec;
use crate::netlist::{parse_netlist, serialize_netlist};
use crate::parity::ParityCheckMatrix;
use crate::switchbox::ObfuscatedNetlist;

const MANIFEST: &str = "manifest.txt";

fn bundle_err(e: impl std::fmt::Display) -> ChipError {
    ChipError::Bundle(e.to_string())
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// File name → contents for a chip.
pub fn bundle_files(chip: &ProtectedChip) -> Vec<(String, String)> {
    let mut files = vec![
        ("f.blif".to_string(), serialize_netlist(&chip.f)),
        ("ced.blif".into(), chip.ced.to_text()),
        ("ced.sbcfg".into(), chip.ced.intended.to_text()),
        ("logic.code".into(), chip.logic_code.to_text()),
        ("dec.blif".into(), chip.input.decoder.to_text()),
        ("dec.sbcfg".into(), chip.input.decoder.intended.to_text()),
        ("dec.code".into(), chip.input.code.to_text()),
        ("lfsr.spec".into(), chip.lfsr.to_text()),
    ];
    let mut params = String::new();
    let _ = writeln!(params, "r = {}", chip.r);
    let _ = writeln!(params, "t = {}", chip.t);
    let _ = writeln!(params, "pipeline_stages = {}", chip.pipeline_stages);
    let _ = writeln!(params, "ports = {}", chip.outputs.len());
    let _ = writeln!(params, "dec.init = {}", chip.input.initial_prev.to_bit_string());
    for (i, p) in chip.outputs.iter().enumerate() {
        let _ = writeln!(params, "enc{i}.subset = {}", join(&p.subset));
        let _ = writeln!(params, "enc{i}.init = {}", p.initial_prev.to_bit_string());
        files.push((format!("enc{i}.blif"), p.encoder.to_text()));
        files.push((format!("enc{i}.sbcfg"), p.encoder.intended.to_text()));
        files.push((format!("enc{i}.code"), p.code.to_text()));
    }
    if let Some((rp, code)) = &chip.ram {
        let _ = writeln!(params, "ram = {},{},{}", rp.addr_bits, rp.word_bits, rp.r);
        files.push(("ram.code".into(), code.to_text()));
    }
    files.push(("params.txt".into(), params));
    files
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes the bundle into `dir` (created if needed).
pub fn save_chip(chip: &ProtectedChip, dir: &Path) -> Result<(), ChipError> {
    fs::create_dir_all(dir).map_err(bundle_err)?;
    let mut manifest = String::new();
    for (name, text) in bundle_files(chip) {
        fs::write(dir.join(&name), &text).map_err(bundle_err)?;
        let _ = writeln!(manifest, "{}  {name}", digest(&text));
    }
    fs::write(dir.join(MANIFEST), manifest).map_err(bundle_err)
}

struct Params(Vec<(String, String)>);

impl Params {
    fn get(&self, key: &str) -> Result<&str, ChipError> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bundle_err(format!("params.txt lacks `{key}`")))
    }

    fn num(&self, key: &str) -> Result<usize, ChipError> {
        self.get(key)?
            .parse()
            .map_err(|_| bundle_err(format!("`{key}` is not a number")))
    }

    fn bits(&self, key: &str) -> Result<BitVector, ChipError> {
        BitVector::from_bit_str(self.get(key)?).ok_or_else(|| bundle_err(format!("`{key}` is not a bit string")))
    }
}

/// Reads a bundle, refusing files whose hash disagrees with the manifest.
pub fn load_chip(dir: &Path) -> Result<ProtectedChip, ChipError> {
    let manifest = fs::read_to_string(dir.join(MANIFEST)).map_err(bundle_err)?;
    let mut files = Vec::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| bundle_err(format!("bad manifest line `{line}`")))?;
        let text = fs::read_to_string(dir.join(name)).map_err(bundle_err)?;
        if digest(&text) != hash {
            return Err(bundle_err(format!("{name}: hash mismatch")));
        }
        files.push((name.to_string(), text));
    }
    let file = |name: &str| -> Result<&str, ChipError> {
        files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
            .ok_or_else(|| bundle_err(format!("missing {name}")))
    };
    let params = Params(
        file("params.txt")?
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect(),
    );
    let code = |name: &str| -> Result<ParityCheckMatrix, ChipError> { Ok(ParityCheckMatrix::from_text(file(name)?)?) };
    let obf = |stem: &str| -> Result<ObfuscatedNetlist, ChipError> {
        Ok(ObfuscatedNetlist::from_text(
            file(&format!("{stem}.blif"))?,
            file(&format!("{stem}.sbcfg"))?,
        )?)
    };

    let f = parse_netlist(file("f.blif")?)?;
    let mut outputs = Vec::new();
    for i in 0..params.num("ports")? {
        let subset = params
            .get(&format!("enc{i}.subset"))?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(bundle_err)?;
        outputs.push(OutputPort {
            subset,
            code: code(&format!("enc{i}.code"))?,
            encoder: obf(&format!("enc{i}"))?,
            initial_prev: params.bits(&format!("enc{i}.init"))?,
        });
    }
    let input = InputPort {
        code: code("dec.code")?,
        decoder: obf("dec")?,
        initial_prev: params.bits("dec.init")?,
    };
    let ram = match params.get("ram") {
        Ok(v) => {
            let n: Vec<usize> = v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(bundle_err)?;
            if n.len() != 3 {
                return Err(bundle_err("ram expects addr_bits,word_bits,r"));
            }
            Some((
                RamParams {
                    addr_bits: n[0],
                    word_bits: n[1],
                    r: n[2],
                },
                code("ram.code")?,
            ))
        }
        Err(_) => None,
    };
    ProtectedChip::assemble(
        f,
        params.num("r")?,
        params.num("t")?,
        code("logic.code")?,
        obf("ced")?,
        outputs,
        input,
        ram,
        LfsrSpec::from_text(file("lfsr.spec")?)?,
        params.num("pipeline_stages")?,
    )
}
