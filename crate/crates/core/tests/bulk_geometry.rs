use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tils_core::bulk::clean_tumour;
use tils_core::{connected_components, tumour_bulk, BulkParams, Connectivity, Raster, Resolution};
use tils_testkit::fixtures::two_squares;
use tils_testkit::{gen, oracle};

#[test]
fn bulk_between_cleaned_tumour_and_its_hull() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.gen_range(48..140), rng.gen_range(48..140));
        let mask = gen::random_blobs(&mut rng, w, h);
        let params = BulkParams {
            pre_close_radius: rng.gen_range(1..5),
            min_component_area: rng.gen_range(1..120),
            boundary_sample_step: rng.gen_range(1..10),
            max_edge_um: rng.gen_range(3.0..150.0),
            post_fill: rng.gen_bool(0.7),
        };
        let (cleaned, _) = clean_tumour(&mask, &params).unwrap();
        let bulk = tumour_bulk(&mask, &params).unwrap();
        assert!(oracle::subset(&cleaned, &bulk), "seed {seed}: bulk misses tumour");
        let hull = oracle::dilate_square(&oracle::convex_hull_mask(&cleaned));
        assert!(oracle::subset(&bulk, &hull), "seed {seed}: bulk leaves the hull");
    }
}

#[test]
fn empty_and_tiny_masks() {
    let p = BulkParams::default();
    let empty = Raster::<u8>::new(40, 40, Resolution::SEG_LEVEL);
    assert_eq!(tumour_bulk(&empty, &p).unwrap(), empty);
    // below the area floor: removed entirely
    let mut dot = empty.clone();
    dot.set(20, 20, 1);
    assert_eq!(tumour_bulk(&dot, &p).unwrap(), empty);
}

#[test]
fn convex_disk_is_its_own_hull() {
    let r = 30i64;
    let disk = Raster::from_fn(100, 100, Resolution::SEG_LEVEL, |x, y| {
        u8::from((x as i64 - 50).pow(2) + (y as i64 - 50).pow(2) <= r * r)
    });
    let p = BulkParams::default();
    let bulk = tumour_bulk(&disk, &p).unwrap();
    let hull = oracle::convex_hull_mask(&disk);
    assert!(oracle::subset(&disk, &bulk));
    assert!(oracle::subset(&bulk, &hull));
    let perimeter = 2.0 * std::f64::consts::PI * r as f64;
    let delta = hull.count_nonzero().abs_diff(bulk.count_nonzero()) as f64;
    assert!(delta <= perimeter, "area delta {delta}");
}

fn two_square_params(max_edge_um: f64, step: usize) -> BulkParams {
    BulkParams {
        pre_close_radius: 2,
        min_component_area: 100,
        boundary_sample_step: step,
        max_edge_um,
        post_fill: true,
    }
}

fn parts(max_edge_um: f64, step: usize) -> usize {
    let m = two_squares(50, 20, 10);
    let bulk = tumour_bulk(&m, &two_square_params(max_edge_um, step)).unwrap();
    connected_components(&bulk, Connectivity::Eight).len()
}

#[test]
fn two_squares_connect_only_with_long_edges() {
    assert_eq!(parts(100.0, 8), 1);
    assert_eq!(parts(5.0, 8), 2);
    assert_eq!(parts(100.0, 1), 1);
    assert_eq!(parts(5.0, 1), 2);
}

#[test]
fn two_squares_switch_at_shortest_bridging_edge() {
    // With every contour pixel sampled, the facing columns are 21 px apart
    // and adjacent samples 1 px apart, so the shortest triangle spanning the
    // gap has longest edge sqrt(21² + 1²).
    let switch = 442f64.sqrt();
    assert_eq!(parts(switch, 1), 1);
    assert_eq!(parts(f64::from_bits(switch.to_bits() - 1), 1), 2);
    let mut last = 2;
    for tenth in 10..400 {
        let n = parts(tenth as f64 / 10.0, 1);
        assert!(n <= last, "connectivity not monotone at {}", tenth as f64 / 10.0);
        last = n;
    }
}
