int dot(int n, int x[const restrict static n], int y[const restrict static n])
{
  int d = 0;
#pragma pencil reduction (+:d)
  for (int i = 0; i < n; i++)
    d += x[i] * y[i];
  return d;
}
