from django.contrib import admin

from .models import SimulationRun, LayerDelivery


class LayerDeliveryInline(admin.TabularInline):
    model = LayerDelivery
    extra = 0


@admin.register(SimulationRun)
class SimulationRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'strategy', 'seed', 'layers', 'stream_rate_kbps', 'window_s', 'aggregate_delivery', 'created_at')
    list_filter = ('strategy', 'layers', 'window_s')
    search_fields = ('config_hash',)
    inlines = [LayerDeliveryInline]


admin.site.register(LayerDelivery)
