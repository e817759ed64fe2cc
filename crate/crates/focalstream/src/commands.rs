//! Command implementations. Each returns `Ok(())` after writing its report to
//! `out`; the binary maps errors to exit statuses.

use std::io::Write;
use std::path::Path;

use focalstream_core::distill::{DistillReport, Distiller, StageReport};
use focalstream_core::metrics::{bitrate_kbps, code_usage, normalized_entropy, TokenHistogram};
use focalstream_core::params::set_trainable;
use focalstream_core::{AudioBuffer, Codec, TokenStream};

use crate::bench::stream_bench;
use crate::bundle::Bundle;
use crate::error::CliError;
use crate::runconfig::RunConfig;
use crate::weights::{self, WeightFile};
use crate::{tokenfile, wav};

pub fn init(run: &RunConfig, model_out: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let codec = Codec::new(run.codec.clone(), run.seed)?;
    weights::save(model_out, codec.config(), &codec)?;
    writeln!(out, "wrote randomly initialized model (seed {}) to {}", run.seed, model_out.display())?;
    Ok(())
}

/// Encodes with a session fed `chunk` samples at a time.
pub fn encode_streaming(codec: &Codec, audio: &AudioBuffer, chunk: usize) -> Result<TokenStream, CliError> {
    let cfg = codec.config();
    if audio.sample_rate != cfg.sample_rate {
        return Err(CliError::Input(format!(
            "audio is {} Hz, model expects {} Hz",
            audio.sample_rate, cfg.sample_rate
        )));
    }
    let mut session = codec.encode_session()?;
    let mut tokens = Vec::new();
    for piece in audio.samples.chunks(chunk.max(1)) {
        tokens.extend(session.push(piece)?);
    }
    tokens.extend(session.flush()?);
    Ok(TokenStream { frame_rate: cfg.frame_rate, bits: cfg.codebook_bits, tokens })
}

/// Decodes with a session fed one token at a time.
pub fn decode_streaming(codec: &Codec, stream: &TokenStream) -> Result<AudioBuffer, CliError> {
    let cfg = codec.config();
    if stream.bits != cfg.codebook_bits {
        return Err(CliError::Input(format!(
            "stream has {}-bit tokens, model uses {}",
            stream.bits, cfg.codebook_bits
        )));
    }
    let mut session = codec.decode_session();
    let mut samples = Vec::new();
    for t in &stream.tokens {
        samples.extend(session.push(std::slice::from_ref(t))?);
    }
    samples.extend(session.flush()?);
    Ok(AudioBuffer::new(cfg.output_rate(), samples))
}

pub fn encode(
    model: &Path,
    input: &Path,
    output: &Path,
    stream_chunk_ms: Option<f64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let codec = weights::load_codec(model)?;
    let audio = wav::read(input)?;
    let tokens = match stream_chunk_ms {
        Some(ms) => {
            if !(ms > 0.0 && ms.is_finite()) {
                return Err(CliError::Usage(format!("--chunk-ms must be positive, got {ms}")));
            }
            let chunk = (ms / 1000.0 * audio.sample_rate as f64).round().max(1.0) as usize;
            encode_streaming(&codec, &audio, chunk)?
        }
        None => codec.encode_offline(&audio)?,
    };
    let f = std::fs::File::create(output)?;
    tokenfile::write(&tokens, std::io::BufWriter::new(f))?;
    writeln!(
        out,
        "encoded {:.3} s ({} samples) into {} tokens of {} bits{}",
        audio.duration_s(),
        audio.samples.len(),
        tokens.tokens.len(),
        tokens.bits,
        if stream_chunk_ms.is_some() { " (streaming)" } else { "" }
    )?;
    Ok(())
}

pub fn decode(model: &Path, input: &Path, output: &Path, streaming: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let codec = weights::load_codec(model)?;
    let f = std::fs::File::open(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let tokens = tokenfile::read(std::io::BufReader::new(f))?;
    let audio = if streaming { decode_streaming(&codec, &tokens)? } else { codec.decode_offline(&tokens)? };
    wav::write_f32(output, &audio)?;
    writeln!(
        out,
        "decoded {} tokens into {} samples at {} Hz{}",
        tokens.tokens.len(),
        audio.samples.len(),
        audio.sample_rate,
        if streaming { " (streaming)" } else { "" }
    )?;
    Ok(())
}

pub struct AuditOptions<'a> {
    pub model: Option<&'a Path>,
    pub bench_seconds: Option<f64>,
}

pub fn audit(run: &RunConfig, opts: &AuditOptions<'_>, out: &mut dyn Write) -> Result<(), CliError> {
    let codec = match opts.model {
        Some(p) => weights::load_codec(p)?,
        None => Codec::new(run.codec.clone(), run.seed)?,
    };
    write!(out, "{}", codec.latency_report().render())?;
    if let Some(seconds) = opts.bench_seconds {
        let r = stream_bench(&codec, seconds, run.chunk_samples())?;
        writeln!(
            out,
            "bench: {:.2} s audio, {} ms pushes, encode {:.3} s, decode {:.3} s, {} tokens, {} samples out",
            r.audio_s, run.chunk_ms, r.encode_s, r.decode_s, r.tokens, r.samples_out
        )?;
        writeln!(out, "real-time factor: {:.2}", r.rtf()?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelect {
    One(u8),
    All,
}

impl std::str::FromStr for StageSelect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(StageSelect::All),
            "1" | "2" | "3" | "4" => Ok(StageSelect::One(s.as_bytes()[0] - b'0')),
            _ => Err(format!("expected 1, 2, 3, 4 or all, got `{s}`")),
        }
    }
}

pub struct DistillOptions<'a> {
    pub stage: StageSelect,
    pub refiner: bool,
    pub stage4: bool,
    pub out_dir: &'a Path,
}

fn run_stage(d: &Distiller, student: &mut Codec, stage: u8, refiner: bool) -> Result<StageReport, CliError> {
    Ok(match stage {
        1 => d.stage1(student)?,
        2 => d.stage2(student)?,
        3 => d.stage3(student)?,
        _ => d.stage4(student, refiner)?,
    })
}

pub fn distill(run: &RunConfig, opts: &DistillOptions<'_>, out: &mut dyn Write) -> Result<DistillReport, CliError> {
    let bundle = Bundle::create(opts.out_dir)?;
    let report = match opts.stage {
        StageSelect::All => {
            let d = Distiller::new(run.codec.clone(), run.distill.clone())?;
            bundle.save_teacher(&run.codec, &d.teacher)?;
            let before = d.teacher.checksum();
            let mut student = d.init_student()?;
            let mut stages = Vec::new();
            for stage in 1..=4u8 {
                if stage == 4 && !opts.stage4 {
                    stages.push(StageReport::skipped(4));
                    continue;
                }
                stages.push(run_stage(&d, &mut student, stage, opts.refiner)?);
                bundle.save_stage(stage, &student)?;
                writeln!(out, "stage {stage} done")?;
            }
            bundle.save_model(&student)?;
            let mut report = d.report(opts.refiner, opts.stage4, stages);
            report.teacher_unchanged = report.teacher_checksum == before;
            report
        }
        StageSelect::One(stage) => {
            if stage == 4 && !opts.stage4 {
                return Err(CliError::Usage("--no-stage4 cannot be combined with --stage 4".into()));
            }
            let (teacher, mut student) = if stage == 1 {
                let d = focalstream_core::distill::Teacher::new(&run.codec, run.distill.seed)?;
                bundle.save_teacher(&run.codec, &d)?;
                let student = Codec::new(run.codec.clone(), run.distill.seed.wrapping_add(1))?;
                (d, student)
            } else {
                let prev = bundle.stage_path(stage - 1);
                if !prev.exists() || !bundle.teacher_path().exists() {
                    return Err(CliError::Usage(format!(
                        "stage {stage} needs {} and {} from earlier stages",
                        prev.display(),
                        bundle.teacher_path().display()
                    )));
                }
                let teacher = WeightFile::read(&bundle.teacher_path())?.into_teacher()?;
                let student = weights::load_codec(&prev)?;
                (teacher, student)
            };
            let config = student.config().clone();
            let d = Distiller::with_teacher(config, run.distill.clone(), teacher)?;
            if stage == 1 {
                student = d.init_student()?;
            }
            set_trainable(&mut student, true);
            let before = d.teacher.checksum();
            let r = run_stage(&d, &mut student, stage, opts.refiner)?;
            bundle.save_stage(stage, &student)?;
            if stage == 4 {
                bundle.save_model(&student)?;
            }
            let mut report = d.report(opts.refiner, stage == 4, vec![r]);
            report.teacher_unchanged = report.teacher_checksum == before;
            report
        }
    };
    bundle.write_report(&report)?;
    write!(out, "{}", report.to_text())?;
    Ok(report)
}

pub fn stats(input: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = std::fs::read(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let stream = tokenfile::from_bytes(&bytes)?;
    let size = 1u64 << stream.bits;
    let hist = TokenHistogram::from_tokens(size as usize, &stream.tokens)?;
    let theoretical = bitrate_kbps(stream.frame_rate, size)?;
    writeln!(out, "tokens: {} ({} bits, {} Hz)", stream.tokens.len(), stream.bits, stream.frame_rate)?;
    if stream.tokens.is_empty() {
        writeln!(out, "code usage: n/a (empty stream)")?;
        writeln!(out, "normalized entropy: n/a (empty stream)")?;
    } else {
        writeln!(out, "code usage: {:.1} %", code_usage(&hist)?)?;
        writeln!(out, "normalized entropy: {:.3}", normalized_entropy(&hist)?)?;
        let seconds = stream.duration_s();
        let payload = (bytes.len() - tokenfile::HEADER_LEN) as f64;
        writeln!(out, "measured bitrate: {:.3} kbps", payload * 8.0 / seconds / 1000.0)?;
    }
    writeln!(out, "theoretical bitrate: {theoretical:.3} kbps")?;
    Ok(())
}
