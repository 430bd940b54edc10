use bogotool::io;
use bogotool_core::whitney::DyadicCube;
use bogotool_core::{Field, Rank, UniformGrid};

fn sample(rank: Rank, n: usize) -> Field {
    let dims: Vec<usize> = (0..n).map(|k| 3 + k).collect();
    let origin: Vec<f64> = (0..n).map(|k| -0.3 + 0.1 * k as f64).collect();
    let g = UniformGrid::new(&origin, 0.125, &dims).unwrap();
    let mut seed = 1u64;
    Field::from_fn(g, rank, |x, out| {
        for (c, o) in out.iter_mut().enumerate() {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            *o = x.iter().sum::<f64>() * (c as f64 + 1.0)
                + (seed >> 11) as f64 / (1u64 << 53) as f64 / 3.0;
        }
    })
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for n in 1..=3 {
        for rank in [Rank::Scalar, Rank::Vector, Rank::Tensor] {
            let f = sample(rank, n);
            let path = dir.path().join(format!("f{n}{}.csv", rank.as_u8()));
            io::write_field(&path, &f).unwrap();
            let back = io::read_field(&path).unwrap();
            let expected = if n == 1 {
                Rank::components(rank, 1)
            } else {
                rank.components(n)
            };
            assert_eq!(back.ncomp(), expected);
            assert_eq!(back.grid(), f.grid());
            assert_eq!(back.values(), f.values());
        }
    }
}

#[test]
fn binary_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for n in 1..=3 {
        for rank in [Rank::Scalar, Rank::Vector, Rank::Tensor] {
            let f = sample(rank, n);
            let path = dir.path().join("f.bin");
            io::write_field(&path, &f).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            let header = 4 + 4 + 8 * n + 8 + 8 * n + 1;
            assert_eq!(bytes.len(), header + 8 * f.values().len());
            assert_eq!(&bytes[..4], b"BGF1");
            assert_eq!(io::read_field(&path).unwrap(), f);
        }
    }
}

#[test]
fn csv_rows_may_come_in_any_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    std::fs::write(&path, "x0,x1,f\n0.5,0,3\n0,0,1\n0.5,0.5,4\n0,0.5,2\n").unwrap();
    let f = io::read_field(&path).unwrap();
    assert_eq!(f.grid().dims(), &[2, 2]);
    assert_eq!(f.grid().spacing(), 0.5);
    assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("gap.csv", "x0,f\n0,1\n1,2\n3,3\n"),
        ("missing.csv", "x0,x1,f\n0,0,1\n0,1,2\n1,0,3\n"),
        ("cols.csv", "x0,g\n0,1\n1,2\n"),
        ("nan.csv", "x0,f\n0,abc\n1,2\n"),
        ("short.bin", "BGF1\u{1}"),
        ("magic.bin", "XXXX0000"),
    ];
    for (name, text) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        assert!(io::read_field(&path).is_err(), "{name}");
    }
    assert!(io::read_field(&dir.path().join("absent.csv")).is_err());
}

#[test]
fn cube_list_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cubes.csv");
    let cubes = vec![
        DyadicCube::new(-3, vec![1, -2]),
        DyadicCube::new(-12, vec![4095, 0]),
    ];
    io::write_cubes_csv(&path, &cubes).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("level,j1,j2\n-3,1,-2\n"));
    assert_eq!(io::read_cubes_csv(&path).unwrap(), cubes);
}
