//! Drives the external measurement harness with shell stand-ins for the
//! encoder and decoder, then fits a power model to the result. Real runs
//! substitute an encoder command line that writes the same sidecar JSON.

use greenladder::harness::{fit_power_model, measure_ladder, ExternalProvider};
use greenladder::model::ConfigSpace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("greenladder_external_example");
    std::fs::create_dir_all(&dir)?;
    let source = dir.join("clip.y4m");
    std::fs::write(&source, "frames")?;

    // sleeps longer for larger frames and finer quantizers
    let encode = concat!(
        ": {width}; cat {input} > {output}; ",
        "sleep $(awk 'BEGIN { print {height} / 36000 + (52 - {qp}) / 2000 }'); ",
        r#"printf '{"bitrate_kbps": %s, "psnr_db": %s, "vmaf": %s}' "#,
        "$(( {height} * (60 - {qp}) / 10 )) $(( 60 - {qp} / 2 )) $(( 100 - {qp} )) > {sidecar}"
    );
    let mut provider = ExternalProvider::new(encode, "cat {output} > /dev/null", dir.join("work"));
    provider.validate()?;
    provider.videos.insert("clip".into(), source);

    let space = ConfigSpace::new(&[360, 720, 1080], &[22, 37, 47])?;
    let ds = measure_ladder(&provider, &["clip".to_string()], &space)?;
    for r in ds.records() {
        println!(
            "{:<12} enc {:.3} s  {:.6} Wh  bitrate {:>6} kbps  vmaf {}",
            r.rep.to_string(),
            r.enc_time,
            r.enc_energy,
            r.bitrate,
            r.vmaf
        );
    }

    let times: Vec<f64> = ds.records().iter().map(|r| r.enc_time).collect();
    let energies: Vec<f64> = ds.records().iter().map(|r| r.enc_energy).collect();
    let pm = fit_power_model(&times, &energies)?;
    println!("fitted encoder power {:.2} W (configured {:.2} W)", pm.avg_power, provider.enc_power.avg_power);
    Ok(())
}
