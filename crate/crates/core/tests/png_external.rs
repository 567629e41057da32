//! Cross-checks the PNG writer against a reference decoder from a
//! different ecosystem (Pillow), so an encode/decode bug in the Rust
//! stack cannot hide behind its own round-trip.

use std::process::Command;

use tempfile::TempDir;
use tip_core::raster::{save_image, RgbImage};

#[test]
fn gradient_png_is_readable_by_a_reference_decoder() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("gradient.png");
    let pixels = [
        [10u8, 20, 30],
        [40, 50, 60],
        [70, 80, 90],
        [200, 210, 220],
    ];
    let img = RgbImage::from_fn(2, 2, |row, col| pixels[(row * 2 + col) as usize]);
    save_image(&img, &path).unwrap();

    let script = "\
import sys
from PIL import Image
im = Image.open(sys.argv[1]).convert('RGB')
assert im.size == (2, 2), im.size
for y in range(2):
    for x in range(2):
        r, g, b = im.getpixel((x, y))
        print(r, g, b)
";
    let out = Command::new("python3")
        .arg("-c")
        .arg(script)
        .arg(&path)
        .output()
        .expect("running the reference decoder");
    assert!(
        out.status.success(),
        "reference decoder rejected the file: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let decoded: Vec<u8> = String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let expected: Vec<u8> = pixels.into_iter().flatten().collect();
    assert_eq!(decoded, expected, "pixel values differ under the reference decoder");
}
