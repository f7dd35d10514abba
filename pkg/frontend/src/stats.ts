// Stats: anomaly counts over time. No submit button: the plot reacts to the
// threshold slider and the day/hour/minute unit directly (debounced). The
// chart supports brush zoom, pan, zoom in/out, autoscale/reset, hover
// tooltips with the exact (date, count) tuple, and image download.

import { ApiClient } from './api.js';
import { StatsController } from './controllers.js';
import { el } from './dom.js';
import { formatTimestamp } from './tables.js';
import type { StatsResponse, TimeUnit } from './types.js';

declare const echarts: {
  init(node: HTMLElement): {
    setOption(option: unknown): void;
    resize(): void;
  };
};

export function chartOption(resp: StatsResponse): unknown {
  const points = resp.buckets.map((b) => [b.start_us / 1000, b.count]);
  return {
    animation: false,
    grid: { left: 60, right: 30, top: 40, bottom: 70 },
    xAxis: { type: 'time' },
    yAxis: { type: 'value', minInterval: 1, name: 'anomalies' },
    tooltip: {
      trigger: 'axis',
      formatter: (params: { value: [number, number] }[]) => {
        const [ms, count] = params[0].value;
        return `${formatTimestamp(ms * 1000)} UTC<br/>${count} anomalies`;
      },
    },
    toolbox: {
      feature: {
        dataZoom: { yAxisIndex: 'none' }, // brush-to-zoom + reset
        restore: {},                       // autoscale / reset axes
        saveAsImage: {},                   // plot download
      },
    },
    dataZoom: [
      { type: 'inside', xAxisIndex: 0 }, // wheel zoom + drag pan
      { type: 'slider', xAxisIndex: 0 },
    ],
    series: [
      {
        type: 'line',
        name: 'anomalies',
        showSymbol: true,
        symbolSize: 5,
        data: points,
      },
    ],
  };
}

export function mountStats(root: HTMLElement, api: ApiClient): StatsController {
  const thresholdValue = el('span', { class: 'slider-value' }, ['0.70']);
  const slider = el('input', {
    type: 'range', min: '0', max: '1', step: '0.01', value: '0.7', class: 'threshold-slider',
  });
  const unit = el('select', {}, [
    el('option', { value: 'day' }, ['day']),
    el('option', { value: 'hour', selected: 'selected' }, ['hour']),
    el('option', { value: 'minute' }, ['minute']),
  ]);
  const sidebar = el('div', { class: 'sidebar' }, [
    el('h3', {}, ['Anomaly threshold']),
    el('div', { class: 'slider-row' }, [slider, thresholdValue]),
    el('h3', {}, ['Time unit']),
    unit,
  ]);

  const chartHost = el('div', { class: 'chart-host' });
  const main = el('div', { class: 'main-panel' }, [chartHost]);
  root.append(sidebar, main);

  const chart = echarts.init(chartHost);
  window.addEventListener('resize', () => chart.resize());

  const controller = new StatsController(
    (req) => api.request<StatsResponse>(req),
    (resp) => chart.setOption(chartOption(resp)),
  );

  slider.addEventListener('input', () => {
    thresholdValue.textContent = Number(slider.value).toFixed(2);
    controller.setThreshold(Number(slider.value));
  });
  unit.addEventListener('change', () => controller.setUnit(unit.value as TimeUnit));

  void controller.refresh();
  return controller;
}
