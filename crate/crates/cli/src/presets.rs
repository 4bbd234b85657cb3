//! Built-in scenarios, embedded at compile time.

use std::path::Path;

pub const PRESETS: &[(&str, &str)] = &[
    ("2d_case1", include_str!("../presets/2d_case1.json")),
    ("2d_case2", include_str!("../presets/2d_case2.json")),
    ("3d_line", include_str!("../presets/3d_line.json")),
    ("3d_circle", include_str!("../presets/3d_circle.json")),
    ("3d_breakdown_46", include_str!("../presets/3d_breakdown_46.json")),
    ("3d_breakdown_25", include_str!("../presets/3d_breakdown_25.json")),
    ("3d_obstacles", include_str!("../presets/3d_obstacles.json")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Reads a scenario file, falling back to a preset of the same name when no
/// such file exists.
pub fn load_source(arg: &str) -> std::io::Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        return std::fs::read_to_string(path);
    }
    let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or(arg);
    preset(stem).map(str::to_owned).ok_or_else(|| {
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{arg}: no such file or preset"),
        )
    })
}
