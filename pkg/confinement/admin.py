# confinement/admin.py

from django.contrib import admin
from .models import RunRecord

class RunRecordAdmin(admin.ModelAdmin):
    list_display = ('subcommand', 'config_hash', 'status', 'exit_code', 'created')
    list_filter = ('subcommand', 'status', 'created')
    search_fields = ('config_hash', 'message')
    readonly_fields = ('config_text', 'report')

admin.site.register(RunRecord, RunRecordAdmin)
