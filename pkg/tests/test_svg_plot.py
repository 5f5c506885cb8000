import xml.etree.ElementTree as ET

import numpy as np

from SuspicionToolbox.svg_plot import line_plot_svg, save_line_plot

SVG = '{http://www.w3.org/2000/svg}'


def test_plot_is_well_formed_svg():
    root = ET.fromstring(line_plot_svg([0.0, 0.5, 0.2], 'Suspicion <clip>', 'frame', 'score'))
    assert root.tag == f'{SVG}svg'
    paths = root.findall(f'{SVG}path')
    assert len(paths) == 1
    assert paths[0].get('d').count('L') == 2
    assert 'Suspicion <clip>' in [t.text for t in root.findall(f'{SVG}text')]


def test_nan_values_split_the_line():
    root = ET.fromstring(line_plot_svg([1.0, np.nan, 0.5, 0.4], 'acf', 'lag', 'r'))
    assert [p.get('d').count('M') for p in root.findall(f'{SVG}path')] == [1, 1]


def test_constant_and_single_value_series(tmp_path):
    ET.fromstring(line_plot_svg([0.3, 0.3, 0.3], 'flat', 'x', 'y'))
    ET.fromstring(line_plot_svg([0.3], 'one', 'x', 'y'))
    path = tmp_path / 'plot.svg'
    save_line_plot(np.linspace(0, 1, 50), str(path), 'ramp', 'x', 'y')
    assert path.read_text(encoding='utf-8').rstrip().endswith('</svg>')
