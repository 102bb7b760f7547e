use strf_core::ingest::{synth_texture, SynthKind, SynthSpec};
use strf_core::pipeline::{for_each_jet, DescriptorConfig};

const FRAMES: usize = 10_000;

/// Peak resident set in KiB, when the platform reports it.
fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[test]
fn extraction_memory_does_not_grow_with_video_length() {
    let mut spec = SynthSpec::new(SynthKind::AdvectedNoise, 32, 32, FRAMES);
    spec.velocity = 0.5;
    let cfg = DescriptorConfig::default();
    let fs = cfg.field_set_spec().unwrap();
    let frames = synth_texture(&spec, 1)
        .unwrap()
        .map(|f| f.map(|f| f.to_plane()));

    let mut buffer: Option<usize> = None;
    let mut early_peak = None;
    let mut checksum = 0.0;
    let seen = for_each_jet(frames, 32, 32, 25.0, &fs, cfg.temporal, |t, ex, jet| {
        let b = ex.buffer_bytes();
        assert_eq!(
            *buffer.get_or_insert(b),
            b,
            "buffer size changed at frame {t}"
        );
        checksum += jet.pixel(16, 16)[0];
        if t == 500 {
            early_peak = peak_rss_kib();
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, FRAMES);
    assert!(checksum.is_finite());
    if let (Some(early), Some(late)) = (early_peak, peak_rss_kib()) {
        // 9,500 further frames of 32x32 f64 would be ~75 MiB if retained
        assert!(
            late - early < 4 * 1024,
            "peak RSS grew from {early} KiB to {late} KiB"
        );
    }
}
