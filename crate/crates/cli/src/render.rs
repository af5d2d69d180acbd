//! PNG rendering of label rasters and plan overlays.

use anyhow::Result;
use relaxnav_core::geom::Cell;
use relaxnav_core::metrics::trajectory_cells;
use relaxnav_core::nav::Plan;
use relaxnav_core::{RegionClass, SemanticGrid, Segmentation};

/// Display color of a label, by name for the urban table and by class otherwise.
pub fn label_color(name: &str, class: RegionClass) -> [u8; 3] {
    match name {
        "sidewalk" => [250, 245, 225],
        "crosswalk" => [255, 255, 255],
        "road" => [90, 90, 95],
        "living_street" => [160, 150, 140],
        "parking_lot" => [190, 190, 200],
        "grass" => [120, 190, 90],
        "rough_terrain" => [150, 120, 80],
        "building" => [140, 70, 60],
        "water" => [70, 130, 200],
        "blocked" => [20, 20, 20],
        _ => match class {
            RegionClass::Free => [235, 235, 235],
            RegionClass::Soft => [200, 170, 90],
            RegionClass::Hard => [40, 40, 40],
        },
    }
}

pub fn palette(grid: &SemanticGrid) -> Vec<[u8; 3]> {
    grid.label_table().iter().map(|l| label_color(&l.name, l.class)).collect()
}

/// One pixel per cell, 8-bit indexed, palette entry `k` for label `k`.
pub fn raster_png(grid: &SemanticGrid) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, grid.width() as u32, grid.height() as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette(grid).concat());
        let mut w = enc.write_header()?;
        w.write_image_data(grid.labels())?;
    }
    Ok(out)
}

/// RGB overlay: relaxed regions tinted orange, planned cells red, start and
/// goal cells blue and green. Each cell is `scale` pixels wide.
pub fn plan_overlay_png(grid: &SemanticGrid, seg: &Segmentation, plan: &Plan, scale: usize) -> Result<Vec<u8>> {
    let scale = scale.max(1);
    let pal = palette(grid);
    let mut cells: Vec<[u8; 3]> = grid.labels().iter().map(|&l| pal[l as usize]).collect();
    for &r in &plan.relaxed {
        if r < seg.n_regions() {
            for &c in seg.region_cells(r) {
                let [a, b, d] = cells[c];
                cells[c] = [blend(a, 255), blend(b, 140), blend(d, 0)];
            }
        }
    }
    let route: Vec<Cell> = if plan.cells.is_empty() { trajectory_cells(grid, &plan.path) } else { plan.cells.clone() };
    for c in route {
        cells[grid.index(c)] = [220, 30, 30];
    }
    for (p, color) in [(plan.path.first(), [30, 60, 220]), (plan.path.last(), [30, 170, 60])] {
        if let Some(c) = p.and_then(|&p| grid.cell_of(p)) {
            cells[grid.index(c)] = color;
        }
    }
    let (w, h) = (grid.width() * scale, grid.height() * scale);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(&cells[(y / scale) * grid.width() + x / scale]);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut wr = enc.write_header()?;
        wr.write_image_data(&data)?;
    }
    Ok(out)
}

fn blend(a: u8, b: u8) -> u8 {
    ((u16::from(a) + u16::from(b)) / 2) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use relaxnav_core::semantic_map::urban_labels;

    fn decode(bytes: &[u8]) -> (png::OutputInfo, Vec<u8>, Option<Vec<u8>>) {
        let dec = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        let pal = reader.info().palette.as_ref().map(|p| p.to_vec());
        buf.truncate(info.buffer_size());
        (info, buf, pal)
    }

    #[test]
    fn raster_round_trips_labels() {
        let mut g = SemanticGrid::filled(5, 3, 1.0, urban_labels(), 0).unwrap();
        g.set_label(Cell::new(4, 2), 7);
        g.set_label(Cell::new(0, 1), 5);
        let (info, data, pal) = decode(&raster_png(&g).unwrap());
        assert_eq!((info.width, info.height), (5, 3));
        assert_eq!(data, g.labels());
        let pal = pal.unwrap();
        assert_eq!(pal.len(), 3 * urban_labels().len());
        assert_eq!(&pal[15..18], &label_color("grass", RegionClass::Soft));
    }

    #[test]
    fn free_and_soft_colors_differ() {
        let pal = palette(&SemanticGrid::filled(1, 1, 1.0, urban_labels(), 0).unwrap());
        let free = pal[0];
        assert!(pal[1..7].iter().all(|&c| c != free));
    }
}
