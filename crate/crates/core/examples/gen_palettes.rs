//! Regenerates the checked-in palette tables under `data/palettes/`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use pv_inspect::thermal::Palette;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/palettes");
    for p in Palette::ALL {
        let path = dir.join(format!("{}.lut", p.name()));
        p.build().write(BufWriter::new(File::create(&path)?))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
